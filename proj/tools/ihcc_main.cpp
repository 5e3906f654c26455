#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>

#include "ihcc/clusters.hpp"
#include "ihcc/config.hpp"
#include "ihcc/linkage.hpp"
#include "ihcc/metrics.hpp"
#include "ihcc/plots.hpp"
#include "ihcc/training.hpp"

namespace fs = std::filesystem;
using namespace ihcc;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const Options& opt) {
    RunConfig c = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
    if (opt.seed) {
        c.corpus.seed = *opt.seed;
        c.train.seed = *opt.seed;
    }
    c.validate();
    return c;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f.precision(6);
    return f;
}

void write_loss_log(const fs::path& path, const std::vector<EpochLog>& log) {
    auto f = open_out(path);
    f << "epoch,l_ins,l_clu,l_ps,l_sb,total\n";
    f.precision(9);
    for (const auto& e : log) {
        f << e.epoch << ',' << e.loss.l_ins << ',' << e.loss.l_clu << ',' << e.loss.l_ps << ',' << e.loss.l_sb << ','
          << e.loss.total << '\n';
    }
}

void cmd_generate(const Options& opt, const std::string& spec_path, const fs::path& out) {
    Options o = opt;
    if (!spec_path.empty()) o.config_path = spec_path;
    const auto c = resolve_config(o);
    const auto m = generate_corpus(c.corpus, out);
    std::cout << "wrote " << m.size() << " images to " << out.string() << '\n';
}

void cmd_train(const Options& opt, const fs::path& manifest_path, const fs::path& out, const std::string& resume) {
    const auto c = resolve_config(opt);
    const auto m = load_manifest(manifest_path);
    fs::create_directories(out);
    {
        auto f = open_out(out / "config.ini");
        write_config(f, c);
    }
    TrainState state = resume.empty() ? init_train_state(c.model, c.train) : load_checkpoint(resume, c.model);
    if (!resume.empty()) state.train_config.epochs = c.train.epochs;
    TrainHooks hooks;
    hooks.checkpoint_dir = out / "checkpoints";
    hooks.on_epoch = [&](const TrainState& s, const EpochLog& e) {
        write_loss_log(out / "loss_log.csv", s.log);
        std::cout << "epoch " << e.epoch << " total " << e.loss.total << '\n';
    };
    train(m, state, hooks);
    write_loss_log(out / "loss_log.csv", state.log);
}

ClusterAssignment assign_from_checkpoint(const fs::path& checkpoint, const Manifest& m) {
    return assign_clusters(load_checkpoint(checkpoint).model, m);
}

void cmd_assign(const Options& opt, const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out) {
    const auto c = resolve_config(opt);
    const auto m = load_manifest(manifest_path);
    const auto a = assign_from_checkpoint(checkpoint, m);
    const auto labels = auto_label_clusters(a, m, c.eval.purity_threshold);
    write_assignments_csv(out, a, &labels);
}

void evaluate(const RunConfig& c, const ModelState<float>& model, const Manifest& m, const ClusterAssignment& a,
              const fs::path& out) {
    const auto labels = auto_label_clusters(a, m, c.eval.purity_threshold);
    std::vector<std::string> types;
    for (const auto& r : m.records) types.push_back(r.environment_type);
    const auto out_f = predict(model, m);
    const auto quality = subcluster_quality(out_f.features.cast<double>(), a);
    const auto trunc = per_sample_truncation(out_f.cluster_probs.cast<double>(), c.eval.truncation_eps);
    const auto pnmi = per_participant_nmi(a, m);
    std::vector<double> pnmi_values;
    for (const auto& [pid, v] : pnmi) pnmi_values.push_back(v);

    auto f = open_out(out / "metrics.csv");
    f << "metric,value\n";
    f << "n_images," << a.size() << '\n';
    f << "cch_size," << a.n_clusters << '\n';
    f << "effective_clusters," << count_effective_clusters(a) << '\n';
    f << "mean_clusters_per_participant," << mean_clusters_per_participant(a) << '\n';
    f << "mean_per_sample_truncation,"
      << std::accumulate(trunc.begin(), trunc.end(), 0.0) / static_cast<double>(trunc.size()) << '\n';
    f << "nmi," << nmi(a.cluster_ids, encode_labels(types)) << '\n';
    f << "acc," << acc(labels, m) << '\n';
    f << "median_participant_nmi," << median(pnmi_values) << '\n';
    if (!quality.scored.empty()) {
        f << "median_subcluster_silhouette," << quality.median_silhouette() << '\n';
        f << "median_subcluster_dunn," << quality.median_dunn() << '\n';
    }
    f << "subclusters_scored," << quality.scored.size() << '\n';
    f << "subclusters_skipped," << quality.skipped.size() << '\n';

    // Per (participant, cluster) purity, the basis of ACC.
    std::map<std::pair<std::string, int>, std::map<std::string, int>> groups;
    for (std::size_t i = 0; i < a.size(); ++i) groups[{a.participant_ids[i], a.cluster_ids[i]}][types[i]]++;
    auto p = open_out(out / "cluster_purity.csv");
    p << "participant_id,cluster_id,count,majority_type,purity,label\n";
    for (const auto& [key, counts] : groups) {
        int total = 0, best = 0;
        std::string best_type;
        for (const auto& [t, n] : counts) {
            total += n;
            if (n > best) best = n, best_type = t;
        }
        p << key.first << ',' << key.second << ',' << total << ',' << best_type << ','
          << static_cast<double>(best) / total << ',' << labels.by_group.at(key) << '\n';
    }

    auto q = open_out(out / "subcluster_quality.csv");
    q << "cluster_id,n_images,n_participants,silhouette,dunn\n";
    for (const auto& s : quality.scored) {
        q << s.cluster_id << ',' << s.n_images << ',' << s.n_participants << ',' << s.silhouette << ',' << s.dunn << '\n';
    }
    for (int cid : quality.skipped) q << cid << ",,1,,\n";

    if (!quality.scored.empty()) {
        BoxGroup sil{"silhouette", {}}, dunn{"dunn", {}};
        for (const auto& s : quality.scored) {
            sil.values.push_back(s.silhouette);
            dunn.values.push_back(s.dunn);
        }
        write_png(out / "subcluster_silhouette.png", box_plot({sil}, -1.0, 1.0));
        double hi = 0;
        for (double v : dunn.values) {
            if (std::isfinite(v)) hi = std::max(hi, v);
        }
        write_png(out / "subcluster_dunn.png", box_plot({dunn}, 0.0, hi > 0 ? hi * 1.1 : 1.0));
        write_box_csv(out / "subcluster_boxes.csv", {sil, dunn});
    }
}

void cmd_evaluate(const Options& opt, const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out) {
    const auto c = resolve_config(opt);
    const auto m = load_manifest(manifest_path);
    const auto state = load_checkpoint(checkpoint);
    evaluate(c, state.model, m, assign_clusters(state.model, m), out);
}

void link(const RunConfig& c, const ClusterAssignment& a, const Manifest& m, const std::string& sort_by,
          const fs::path& table_path) {
    const auto labels = global_cluster_labels(a, m, c.eval.purity_threshold);
    write_outcome_table_csv(table_path, cluster_outcome_table(a, m, c.eval.min_cluster_size, sort_by, &labels));
    std::vector<BoxGroup> groups;
    for (const auto& outcome : m.outcome_names) {
        BoxGroup g{outcome, {}};
        for (const auto& [pid, v] : participant_outcome_nmi(a, m, outcome)) g.values.push_back(v);
        groups.push_back(std::move(g));
    }
    const fs::path stem = table_path.parent_path() / table_path.stem();
    write_box_csv(stem.string() + "_participant_nmi.csv", groups);
    write_png(stem.string() + "_participant_nmi.png", box_plot(groups, 0.0, 1.0));
}

void cmd_link(const Options& opt, const fs::path& assignments, const fs::path& manifest_path, std::string sort_by,
              const fs::path& out) {
    const auto c = resolve_config(opt);
    const auto m = load_manifest(manifest_path, false);
    if (sort_by.empty()) sort_by = c.eval.sort_outcome;
    link(c, read_assignments_csv(assignments, m), m, sort_by, out);
}

void cmd_report(const Options& opt, const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out) {
    const auto c = resolve_config(opt);
    const auto m = load_manifest(manifest_path);
    const auto state = load_checkpoint(checkpoint);
    const auto a = assign_clusters(state.model, m);
    const auto labels = auto_label_clusters(a, m, c.eval.purity_threshold);
    write_assignments_csv(out / "assignments.csv", a, &labels);
    evaluate(c, state.model, m, a, out);
    link(c, a, m, c.eval.sort_outcome, out / "outcome_table.csv");
    fs::create_directories(out / "montages");
    std::set<std::string> participants(a.participant_ids.begin(), a.participant_ids.end());
    for (const auto& pid : participants) {
        write_png(out / "montages" / ("participant_" + pid + ".png"), participant_montage(a, m, pid));
    }
    for (int cid : std::set<int>(a.cluster_ids.begin(), a.cluster_ids.end())) {
        write_png(out / "montages" / ("cluster_" + std::to_string(cid) + ".png"), cluster_montage(a, m, cid));
    }
    std::cout << "report written to " << out.string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive clustering of participant image streams"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    app.add_option("--config", opt.config_path, "INI run configuration")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Overrides the corpus and training seeds");

    std::string spec_path, resume, sort_by;
    fs::path out, manifest, checkpoint, assignments;

    auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
    gen->add_option("--spec", spec_path, "Config file whose [corpus] sections describe the corpus")
        ->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    tr->add_option("--out", out, "Run directory")->required();
    tr->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

    auto* as = app.add_subcommand("assign", "Assign images to clusters");
    as->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    as->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    as->add_option("--out", out, "Assignments CSV")->required();

    auto* ev = app.add_subcommand("evaluate", "Clustering metrics and sub-cluster quality");
    ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    ev->add_option("--out", out, "Report directory")->required();

    auto* ln = app.add_subcommand("link", "Per-cluster outcome table and per-participant NMI");
    ln->add_option("--assignments", assignments)->required()->check(CLI::ExistingFile);
    ln->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    ln->add_option("--sort-by", sort_by, "Outcome column to sort by");
    ln->add_option("--out", out, "Outcome table CSV")->required();

    auto* rp = app.add_subcommand("report", "assign, evaluate and link into one directory");
    rp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    rp->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    rp->add_option("--out", out, "Report directory")->required();

    bool defaults = false;
    auto* cf = app.add_subcommand("config", "Print a configuration");
    cf->add_flag("--defaults", defaults, "Print every default value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return 0;
        std::cerr << app.help();
        return 1;
    }
    if (*seed_opt) opt.seed = seed;

    try {
        if (*gen) cmd_generate(opt, spec_path, out);
        if (*tr) cmd_train(opt, manifest, out, resume);
        if (*as) cmd_assign(opt, checkpoint, manifest, out);
        if (*ev) cmd_evaluate(opt, checkpoint, manifest, out);
        if (*ln) cmd_link(opt, assignments, manifest, sort_by, out);
        if (*rp) cmd_report(opt, checkpoint, manifest, out);
        if (*cf) write_config(std::cout, defaults ? RunConfig{} : resolve_config(opt));
    } catch (const ConfigError& e) {
        std::cerr << "ihcc: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ihcc: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
