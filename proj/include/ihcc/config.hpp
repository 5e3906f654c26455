#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ihcc/corpus.hpp"
#include "ihcc/model.hpp"
#include "ihcc/training.hpp"

namespace ihcc {

struct EvalConfig {
    double purity_threshold = 0.5;
    int min_cluster_size = 10; // outcome tables keep clusters strictly larger
    std::string sort_outcome = "smoking";
    double truncation_eps = 0.01;

    void validate() const;
};

// Everything one run needs. Sections of the INI file map onto the members:
// [corpus] [outcome_rates] [link_strength] [model] [train] [sb] [augment] [eval].
struct RunConfig {
    CorpusSpec corpus;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;
};

// Starts from defaults and applies every key in the file. Unknown sections or
// keys and unparsable values throw ConfigError naming the offending entry.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

// Writes every field, so the output reloads to an equal config.
void write_config(std::ostream& out, const RunConfig& config);
std::string config_to_string(const RunConfig& config);

} // namespace ihcc
