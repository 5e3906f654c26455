#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ihcc/common.hpp"
#include "ihcc/image.hpp"

namespace ihcc {

// Default environment-type vocabulary (first n_env_types are used).
const std::vector<std::string>& default_env_type_names();
// Default outcome vocabulary.
const std::vector<std::string>& default_outcome_names();

struct ImageRecord {
    std::string image_id;
    std::string participant_id;
    std::string environment_id;
    std::string environment_type;
    std::string image_path;   // relative to the manifest directory
    std::vector<double> outcomes; // aligned with Manifest::outcome_names
    Image pixels;             // empty when loaded without pixels
};

struct Manifest {
    std::filesystem::path root; // directory the image paths are relative to
    std::vector<std::string> outcome_names;
    std::vector<ImageRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    // Index of an outcome column, or nullopt.
    std::optional<std::size_t> outcome_index(const std::string& name) const;
    // Distinct participant ids in first-appearance order.
    std::vector<std::string> participants() const;
};

struct CorpusSpec {
    int n_participants = 6;
    int n_env_types = 6;
    int envs_per_participant = 6;
    int max_envs_per_type = 1; // per participant
    int captures_per_env = 30;
    int image_size = 64;
    std::vector<std::string> outcome_names = default_outcome_names();
    // environment_type -> outcome -> probability. Missing entries default to 0.5.
    std::map<std::string, std::map<std::string, double>> outcome_rates;
    // participant_id -> link strength; participants not listed use default_link_strength.
    std::map<std::string, double> participant_link_strength;
    double default_link_strength = 1.0;
    // Blend weight of the environment-specific objects over the type scene;
    // 0 leaves only type and participant cues.
    double detail_strength = 0.4;
    std::uint64_t seed = 0;

    // Throws ConfigError on any violated invariant.
    void validate() const;
    int total_images() const { return n_participants * envs_per_participant * captures_per_env; }
    std::vector<std::string> env_type_names() const;
    std::string participant_name(int p) const;
    double link_strength(const std::string& participant_id) const;
    double outcome_rate(const std::string& env_type, const std::string& outcome) const;
};

// The built-in rate table used when a spec leaves outcome_rates empty.
std::map<std::string, std::map<std::string, double>> default_outcome_rates();

// Generates the corpus in memory. Deterministic per (spec, seed); each record
// depends only on its own (participant, environment, capture) index.
Manifest generate_corpus(const CorpusSpec& spec);

// Writes manifest.csv and images/<image_id>.png under out_dir.
void write_corpus(const Manifest& manifest, const std::filesystem::path& out_dir);

// Validates, generates, and writes; nothing is written when the spec is invalid.
Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path, bool load_pixels = true);

struct AugmentationConfig {
    double crop_scale_lo = 0.5; // fraction of image area kept by the crop
    double crop_scale_hi = 1.0;
    double brightness_jitter = 0.2; // multiplicative factor drawn from [1-j, 1+j]
    double noise_std = 0.02;
    double horizontal_flip_prob = 0.5;
    int output_size = 0; // 0 keeps the input size

    // Throws ConfigError; image_size is the side of the images to be augmented.
    void validate(int image_size) const;
};

// One random view of the image. Two calls with independent generators on the
// same record produce a positive pair.
Image augment(const Image& pixels, const AugmentationConfig& config, std::mt19937_64& rng);

} // namespace ihcc
