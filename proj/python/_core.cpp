#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ihcc/clusters.hpp"
#include "ihcc/config.hpp"
#include "ihcc/linkage.hpp"
#include "ihcc/losses.hpp"
#include "ihcc/metrics.hpp"
#include "ihcc/training.hpp"

namespace py = pybind11;
using namespace ihcc;

namespace {

py::dict assignment_dict(const ClusterAssignment& a) {
    py::dict d;
    d["n_clusters"] = a.n_clusters;
    d["image_ids"] = a.image_ids;
    d["participant_ids"] = a.participant_ids;
    d["cluster_ids"] = a.cluster_ids;
    d["max_probs"] = a.max_probs;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "C++ core of ihcc";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

    m.def("pi_to_beta", [](const std::vector<double>& pi, double eps_clamp, bool include_last_break) {
        return pi_to_beta(pi, eps_clamp, include_last_break);
    }, py::arg("pi"), py::arg("eps_clamp") = 0.0, py::arg("include_last_break") = true);
    m.def("beta_to_pi", [](const std::vector<double>& beta) { return beta_to_pi(beta).pi; }, py::arg("beta"));
    m.def("sb_log_prior", [](const MatD& probs, double alpha, double eps_clamp, bool include_last_break) {
        SBPriorConfig c;
        c.alpha = alpha;
        c.eps_clamp = eps_clamp;
        c.include_last_break = include_last_break;
        return sb_log_prior(probs, c);
    }, py::arg("cluster_probs"), py::arg("alpha") = 1.5, py::arg("eps_clamp") = 1e-6,
       py::arg("include_last_break") = false);
    m.def("instance_contrastive_loss", [](const MatD& a, const MatD& b, double tau) {
        return instance_contrastive_loss(a, b, tau);
    }, py::arg("embed_a"), py::arg("embed_b"), py::arg("tau") = 0.5);
    m.def("cluster_contrastive_loss", [](const MatD& a, const MatD& b, double tau) {
        return cluster_contrastive_loss(a, b, tau).value();
    }, py::arg("probs_a"), py::arg("probs_b"), py::arg("tau") = 1.0);
    m.def("participant_loss", [](const MatD& p, const std::vector<int>& labels) {
        return participant_loss(p, labels);
    }, py::arg("participant_probs"), py::arg("labels"));

    m.def("nmi", py::overload_cast<const std::vector<int>&, const std::vector<int>&>(&nmi));
    m.def("silhouette", &silhouette, py::arg("points"), py::arg("labels"));
    m.def("dunn_index", &dunn_index, py::arg("points"), py::arg("labels"));
    m.def("spearman", &spearman);

    m.def("default_config", [] { return config_to_string(RunConfig{}); });
    m.def("check_config", [](const std::string& text) { return config_to_string(parse_config(text)); },
          "Parses and validates config text; returns it with every field filled in.");

    m.def("generate_corpus", [](const std::string& config_text, const std::filesystem::path& out) {
        return generate_corpus(parse_config(config_text).corpus, out).size();
    }, py::arg("config_text"), py::arg("out_dir"), "Writes a synthetic corpus; returns the image count.");

    m.def("train", [](const std::filesystem::path& manifest, const std::string& config_text,
                      const std::filesystem::path& checkpoint_dir) {
        const auto c = parse_config(config_text);
        const auto man = load_manifest(manifest);
        TrainHooks hooks;
        hooks.checkpoint_dir = checkpoint_dir;
        TrainState s;
        {
            py::gil_scoped_release release;
            s = train(man, c.model, c.train, hooks);
        }
        py::list log;
        for (const auto& e : s.log) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["l_ins"] = e.loss.l_ins;
            d["l_clu"] = e.loss.l_clu;
            d["l_ps"] = e.loss.l_ps;
            d["l_sb"] = e.loss.l_sb;
            d["total"] = e.loss.total;
            log.append(d);
        }
        return log;
    }, py::arg("manifest"), py::arg("config_text"), py::arg("checkpoint_dir"),
       "Trains and writes final.bin to checkpoint_dir; returns the per-epoch loss log.");

    m.def("assign", [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
        const auto man = load_manifest(manifest);
        return assignment_dict(assign_clusters(load_checkpoint(checkpoint).model, man));
    }, py::arg("checkpoint"), py::arg("manifest"));

    m.def("evaluate", [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
        const auto man = load_manifest(manifest);
        const auto model = load_checkpoint(checkpoint).model;
        const auto a = assign_clusters(model, man);
        std::vector<std::string> types;
        for (const auto& r : man.records) types.push_back(r.environment_type);
        py::dict d;
        d["effective_clusters"] = count_effective_clusters(a);
        d["nmi"] = nmi(a.cluster_ids, encode_labels(types));
        d["acc"] = acc(auto_label_clusters(a, man), man);
        d["mean_clusters_per_participant"] = mean_clusters_per_participant(a);
        return d;
    }, py::arg("checkpoint"), py::arg("manifest"));
}
