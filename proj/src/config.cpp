#include "ihcc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ihcc {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

// Shortest text that parses back to the same double.
std::string format(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct Key {
    std::string section, name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("expected a number, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("expected true or false, got '" + text + "'");
}

#define IHCC_NUM(sec, key, expr)                                                                  \
    Key {                                                                                         \
        sec, #key, [](const RunConfig& c) { return format(static_cast<double>(c.expr)); },        \
            [](RunConfig& c, const std::string& v) {                                              \
                c.expr = parse_number<std::decay_t<decltype(c.expr)>>(v);                         \
            }                                                                                     \
    }

#define IHCC_BOOL(sec, key, expr)                                                                  \
    Key {                                                                                          \
        sec, #key, [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); },      \
            [](RunConfig& c, const std::string& v) { c.expr = parse_bool(v); }                     \
    }

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        IHCC_NUM("corpus", n_participants, corpus.n_participants),
        IHCC_NUM("corpus", n_env_types, corpus.n_env_types),
        IHCC_NUM("corpus", envs_per_participant, corpus.envs_per_participant),
        IHCC_NUM("corpus", max_envs_per_type, corpus.max_envs_per_type),
        IHCC_NUM("corpus", captures_per_env, corpus.captures_per_env),
        IHCC_NUM("corpus", image_size, corpus.image_size),
        IHCC_NUM("corpus", detail_strength, corpus.detail_strength),
        IHCC_NUM("corpus", default_link_strength, corpus.default_link_strength),
        IHCC_NUM("corpus", seed, corpus.seed),
        Key{"corpus", "outcome_names",
            [](const RunConfig& c) {
                std::string s;
                for (const auto& n : c.corpus.outcome_names) s += (s.empty() ? "" : ",") + n;
                return s;
            },
            [](RunConfig& c, const std::string& v) {
                c.corpus.outcome_names.clear();
                std::istringstream in(v);
                for (std::string part; std::getline(in, part, ',');) c.corpus.outcome_names.push_back(trim(part));
            }},
        Key{"model", "encoder_kind", [](const RunConfig& c) { return to_string(c.model.encoder_kind); },
            [](RunConfig& c, const std::string& v) { c.model.encoder_kind = parse_encoder_kind(v); }},
        IHCC_NUM("model", image_size, model.image_size),
        IHCC_NUM("model", feature_dim, model.feature_dim),
        IHCC_NUM("model", instance_dim, model.instance_dim),
        IHCC_NUM("model", cch_size, model.cch_size),
        IHCC_NUM("model", n_participants, model.n_participants),
        IHCC_NUM("model", head_hidden_dim, model.head_hidden_dim),
        IHCC_NUM("train", epochs, train.epochs),
        IHCC_NUM("train", batch_size, train.batch_size),
        IHCC_NUM("train", learning_rate, train.learning_rate),
        IHCC_NUM("train", weight_decay, train.weight_decay),
        IHCC_NUM("train", tau_I, train.tau_I),
        IHCC_NUM("train", tau_C, train.tau_C),
        IHCC_NUM("train", seed, train.seed),
        IHCC_NUM("train", checkpoint_every, train.checkpoint_every),
        IHCC_BOOL("train", use_participant_head, train.use_participant_head),
        IHCC_NUM("train", bn_momentum, train.bn_momentum),
        IHCC_NUM("sb", alpha, train.sb.alpha),
        IHCC_NUM("sb", lambda_sb, train.sb.lambda_sb),
        IHCC_NUM("sb", eps_clamp, train.sb.eps_clamp),
        IHCC_BOOL("sb", include_last_break, train.sb.include_last_break),
        IHCC_NUM("augment", crop_scale_lo, train.augmentation.crop_scale_lo),
        IHCC_NUM("augment", crop_scale_hi, train.augmentation.crop_scale_hi),
        IHCC_NUM("augment", brightness_jitter, train.augmentation.brightness_jitter),
        IHCC_NUM("augment", noise_std, train.augmentation.noise_std),
        IHCC_NUM("augment", horizontal_flip_prob, train.augmentation.horizontal_flip_prob),
        IHCC_NUM("augment", output_size, train.augmentation.output_size),
        IHCC_NUM("eval", purity_threshold, eval.purity_threshold),
        IHCC_NUM("eval", min_cluster_size, eval.min_cluster_size),
        Key{"eval", "sort_outcome", [](const RunConfig& c) { return c.eval.sort_outcome; },
            [](RunConfig& c, const std::string& v) { c.eval.sort_outcome = v; }},
        IHCC_NUM("eval", truncation_eps, eval.truncation_eps),
    };
    return k;
}

#undef IHCC_NUM
#undef IHCC_BOOL

const std::vector<std::string> kSections = {"corpus", "outcome_rates", "link_strength", "model",
                                            "train",  "sb",            "augment",       "eval"};

} // namespace

void EvalConfig::validate() const {
    if (!(purity_threshold > 0.0 && purity_threshold <= 1.0)) throw ConfigError("purity_threshold must lie in (0, 1]");
    if (min_cluster_size < 0) throw ConfigError("min_cluster_size must be nonnegative");
    if (sort_outcome.empty()) throw ConfigError("sort_outcome must be set");
    if (!(truncation_eps > 0.0 && truncation_eps < 1.0)) throw ConfigError("truncation_eps must lie in (0, 1)");
}

void RunConfig::validate() const {
    corpus.validate();
    model.validate();
    train.validate();
    train.augmentation.validate(model.image_size);
    eval.validate();
}

RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig c;
    // Sections replace, not merge, the built-in tables.
    if (tree.find("outcome_rates") != tree.not_found()) c.corpus.outcome_rates.clear();
    for (const auto& [section, body] : tree) {
        if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
            throw ConfigError("unknown config section [" + section + "]");
        }
        if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
        for (const auto& [name, node] : body) {
            const std::string value = trim(node.data());
            const std::string where = "[" + section + "] " + name;
            if (section == "outcome_rates") {
                const auto dot = name.find('.');
                if (dot == std::string::npos) throw ConfigError(where + ": expected <environment_type>.<outcome>");
                c.corpus.outcome_rates[name.substr(0, dot)][name.substr(dot + 1)] = parse_number<double>(value);
                continue;
            }
            if (section == "link_strength") {
                c.corpus.participant_link_strength[name] = parse_number<double>(value);
                continue;
            }
            const auto& all = keys();
            auto it = std::find_if(all.begin(), all.end(), [&](const Key& k) { return k.section == section && k.name == name; });
            if (it == all.end()) throw ConfigError("unknown config key " + where);
            try {
                it->set(c, value);
            } catch (const ConfigError& e) {
                throw ConfigError(where + ": " + e.what());
            }
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void write_config(std::ostream& out, const RunConfig& config) {
    bool first = true;
    for (const auto& section : kSections) {
        out << (first ? "" : "\n") << '[' << section << "]\n";
        first = false;
        if (section == "outcome_rates" && config.corpus.outcome_rates.empty()) {
            out << "; empty: the built-in table applies, shown here commented out\n";
            for (const auto& [type, row] : default_outcome_rates()) {
                for (const auto& [outcome, p] : row) out << "; " << type << '.' << outcome << " = " << format(p) << '\n';
            }
        } else if (section == "outcome_rates") {
            for (const auto& [type, row] : config.corpus.outcome_rates) {
                for (const auto& [outcome, p] : row) out << type << '.' << outcome << " = " << format(p) << '\n';
            }
        } else if (section == "link_strength") {
            for (const auto& [pid, s] : config.corpus.participant_link_strength) out << pid << " = " << format(s) << '\n';
        } else {
            for (const auto& k : keys()) {
                if (k.section == section) out << k.name << " = " << k.get(config) << '\n';
            }
        }
    }
}

std::string config_to_string(const RunConfig& config) {
    std::ostringstream o;
    write_config(o, config);
    return o.str();
}

} // namespace ihcc
