#include "ihcc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ihcc/common.hpp"

namespace ihcc {

namespace fs = std::filesystem;

const std::vector<std::string>& default_env_type_names() {
    static const std::vector<std::string> names = {"living_room", "dining_room", "kitchen",
                                                   "working_area", "porch", "bedroom"};
    return names;
}

const std::vector<std::string>& default_outcome_names() {
    static const std::vector<std::string> names = {"smoking", "craving", "stress", "tired", "sad", "restless"};
    return names;
}

std::map<std::string, std::map<std::string, double>> default_outcome_rates() {
    // Rows follow default_outcome_names().
    const std::vector<std::vector<double>> table = {
        {0.50, 0.30, 0.40, 0.60, 0.20, 0.40}, // living_room
        {0.30, 0.20, 0.30, 0.40, 0.15, 0.30}, // dining_room
        {0.40, 0.30, 0.30, 0.50, 0.15, 0.40}, // kitchen
        {0.20, 0.40, 0.70, 0.60, 0.30, 0.50}, // working_area
        {0.90, 0.50, 0.50, 0.60, 0.25, 0.60}, // porch
        {0.10, 0.20, 0.60, 0.80, 0.30, 0.50}, // bedroom
    };
    std::map<std::string, std::map<std::string, double>> rates;
    const auto& types = default_env_type_names();
    const auto& outcomes = default_outcome_names();
    for (std::size_t t = 0; t < types.size(); ++t) {
        for (std::size_t o = 0; o < outcomes.size(); ++o) rates[types[t]][outcomes[o]] = table[t][o];
    }
    return rates;
}

std::optional<std::size_t> Manifest::outcome_index(const std::string& name) const {
    auto it = std::find(outcome_names.begin(), outcome_names.end(), name);
    if (it == outcome_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - outcome_names.begin());
}

std::vector<std::string> Manifest::participants() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.participant_id).second) out.push_back(r.participant_id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CorpusSpec

namespace {

constexpr int kMaxEnvTypes = 24;

void check_probability(double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0,1], got " + std::to_string(p));
}

} // namespace

void CorpusSpec::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(n_participants, "n_participants");
    positive(n_env_types, "n_env_types");
    positive(envs_per_participant, "envs_per_participant");
    positive(max_envs_per_type, "max_envs_per_type");
    positive(captures_per_env, "captures_per_env");
    if (image_size < 8) throw ConfigError("image_size must be at least 8");
    if (n_env_types > kMaxEnvTypes) throw ConfigError("n_env_types exceeds " + std::to_string(kMaxEnvTypes));
    if (envs_per_participant > n_env_types * max_envs_per_type) {
        throw ConfigError("envs_per_participant exceeds n_env_types * max_envs_per_type");
    }
    std::set<std::string> outcomes(outcome_names.begin(), outcome_names.end());
    if (outcomes.size() != outcome_names.size()) throw ConfigError("duplicate outcome name");
    for (const auto& o : outcome_names) {
        if (o.empty() || o.find_first_of(",\n\r") != std::string::npos) throw ConfigError("invalid outcome name '" + o + "'");
    }
    const auto types = env_type_names();
    for (const auto& [type, row] : outcome_rates) {
        if (std::find(types.begin(), types.end(), type) == types.end()) {
            throw ConfigError("outcome rate given for unknown environment type '" + type + "'");
        }
        for (const auto& [outcome, p] : row) {
            if (!outcomes.count(outcome)) throw ConfigError("outcome rate given for unknown outcome '" + outcome + "'");
            check_probability(p, "outcome rate " + type + "." + outcome);
        }
    }
    check_probability(default_link_strength, "default_link_strength");
    check_probability(detail_strength, "detail_strength");
    for (const auto& [pid, s] : participant_link_strength) check_probability(s, "link strength of " + pid);
}

std::vector<std::string> CorpusSpec::env_type_names() const {
    std::vector<std::string> names;
    const auto& defaults = default_env_type_names();
    for (int t = 0; t < n_env_types; ++t) {
        names.push_back(t < static_cast<int>(defaults.size()) ? defaults[t] : "type_" + std::to_string(t));
    }
    return names;
}

std::string CorpusSpec::participant_name(int p) const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%02d", p);
    return buf;
}

double CorpusSpec::link_strength(const std::string& participant_id) const {
    auto it = participant_link_strength.find(participant_id);
    return it == participant_link_strength.end() ? default_link_strength : it->second;
}

double CorpusSpec::outcome_rate(const std::string& env_type, const std::string& outcome) const {
    const auto& table = outcome_rates.empty() ? default_outcome_rates() : outcome_rates;
    auto row = table.find(env_type);
    if (row == table.end()) return 0.5;
    auto it = row->second.find(outcome);
    return it == row->second.end() ? 0.5 : it->second;
}

// ---------------------------------------------------------------------------
// Procedural scenes

namespace {

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h -= std::floor(h);
    s = std::clamp(s, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double h6 = h * 6.0;
    const int i = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = v, g = t, b = p;
    switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
    }
    return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

struct ParticipantStyle {
    double hue_offset;
    double value_offset;
    double phase_x;
    double phase_y;
};

struct SceneObject {
    Rgb color;
    double cx, cy, radius;
    bool rectangle;
};

constexpr double kTwoPi = 6.283185307179586;

// Motif mask for environment type t at normalized coordinates (x, y).
bool motif(int type, double x, double y) {
    const double f = type < 6 ? 5.0 : 7.0;
    switch (type % 6) {
    case 0: return std::sin(kTwoPi * f * y) > 0.3;
    case 1: return std::sin(kTwoPi * f * x) > 0.3;
    case 2: return static_cast<long>(std::floor(x * f) + std::floor(y * f)) % 2 == 0;
    case 3: return std::sin(kTwoPi * f * std::hypot(x - 0.5, y - 0.5)) > 0.3;
    case 4: return std::sin(kTwoPi * f * (x + y) / 1.4) > 0.3;
    default: {
        const double fx = x * f - std::floor(x * f) - 0.5;
        const double fy = y * f - std::floor(y * f) - 0.5;
        return std::hypot(fx, fy) < 0.25;
    }
    }
}

Image render_scene(int type, int n_types, const ParticipantStyle& style, const std::vector<SceneObject>& objects,
                   double detail, int side) {
    Image img(side, side);
    const Rgb base = hsv_to_rgb(static_cast<double>(type) / n_types + style.hue_offset, 0.65, 0.75 + style.value_offset);
    const Rgb dark{base.r * 0.45f, base.g * 0.45f, base.b * 0.45f};
    for (int yi = 0; yi < side; ++yi) {
        const double y = static_cast<double>(yi) / side;
        const float shade = static_cast<float>(0.85 + 0.3 * y);
        for (int xi = 0; xi < side; ++xi) {
            const double x = static_cast<double>(xi) / side;
            Rgb c{base.r * shade, base.g * shade, base.b * shade};
            if (motif(type, x + style.phase_x, y + style.phase_y)) c = dark;
            for (const auto& o : objects) {
                const bool inside = o.rectangle ? (std::abs(x - o.cx) < o.radius && std::abs(y - o.cy) < o.radius * 1.5)
                                                : std::hypot(x - o.cx, y - o.cy) < o.radius;
                if (inside) {
                    c.r += static_cast<float>(detail) * (o.color.r - c.r);
                    c.g += static_cast<float>(detail) * (o.color.g - c.g);
                    c.b += static_cast<float>(detail) * (o.color.b - c.b);
                }
            }
            img.at(yi, xi, 0) = c.r;
            img.at(yi, xi, 1) = c.g;
            img.at(yi, xi, 2) = c.b;
        }
    }
    clip_unit(img);
    return img;
}

enum Stream : std::uint64_t { kParticipantStream = 1, kEnvStream = 2, kCaptureStream = 3 };

} // namespace

Manifest generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    Manifest m;
    m.outcome_names = spec.outcome_names;
    const auto type_names = spec.env_type_names();
    const int base_side = static_cast<int>(std::lround(spec.image_size * 1.25));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    m.records.reserve(static_cast<std::size_t>(spec.total_images()));

    for (int p = 0; p < spec.n_participants; ++p) {
        std::mt19937_64 prng(derive_seed(spec.seed, kParticipantStream, p));
        ParticipantStyle style{};
        style.hue_offset = std::uniform_real_distribution<double>(-0.03, 0.03)(prng);
        style.value_offset = std::uniform_real_distribution<double>(-0.08, 0.08)(prng);
        style.phase_x = unit(prng);
        style.phase_y = unit(prng);
        std::vector<int> type_order(spec.n_env_types);
        std::iota(type_order.begin(), type_order.end(), 0);
        std::shuffle(type_order.begin(), type_order.end(), prng);

        const std::string pid = spec.participant_name(p);
        const double link = spec.link_strength(pid);

        for (int e = 0; e < spec.envs_per_participant; ++e) {
            const int type = type_order[e % spec.n_env_types];
            std::mt19937_64 erng(derive_seed(spec.seed, kEnvStream, p, e));
            std::vector<SceneObject> objects(3);
            for (auto& o : objects) {
                o.color = hsv_to_rgb(unit(erng), 0.8, 0.9);
                o.cx = unit(erng) * 0.7 + 0.15;
                o.cy = unit(erng) * 0.7 + 0.15;
                o.radius = unit(erng) * 0.06 + 0.06;
                o.rectangle = unit(erng) < 0.5;
            }
            const Image scene = render_scene(type, spec.n_env_types, style, objects, spec.detail_strength, base_side);
            char env_buf[32];
            std::snprintf(env_buf, sizeof env_buf, "%s_E%02d", pid.c_str(), e);
            const std::string env_id = env_buf;

            for (int c = 0; c < spec.captures_per_env; ++c) {
                std::mt19937_64 crng(derive_seed(spec.seed, kCaptureStream, p, e, c));
                const double frac = std::uniform_real_distribution<double>(0.75, 1.0)(crng);
                const int w = std::max(1, static_cast<int>(std::lround(base_side * frac)));
                const int x0 = std::uniform_int_distribution<int>(0, base_side - w)(crng);
                const int y0 = std::uniform_int_distribution<int>(0, base_side - w)(crng);
                Image img = resample_window(scene, x0, y0, w, w, spec.image_size, spec.image_size);
                const float gain = static_cast<float>(std::uniform_real_distribution<double>(0.8, 1.2)(crng));
                std::normal_distribution<float> noise(0.0f, 0.03f);
                for (float& v : img.data) v = v * gain + noise(crng);
                quantize_8bit(img);

                ImageRecord rec;
                char id_buf[48];
                std::snprintf(id_buf, sizeof id_buf, "%s_C%03d", env_id.c_str(), c);
                rec.image_id = id_buf;
                rec.participant_id = pid;
                rec.environment_id = env_id;
                rec.environment_type = type_names[type];
                rec.image_path = "images/" + rec.image_id + ".png";
                rec.outcomes.reserve(spec.outcome_names.size());
                for (const auto& outcome : spec.outcome_names) {
                    const bool linked = unit(crng) < link;
                    const double rate = linked ? spec.outcome_rate(type_names[type], outcome) : 0.5;
                    rec.outcomes.push_back(unit(crng) < rate ? 1.0 : 0.0);
                }
                rec.pixels = std::move(img);
                m.records.push_back(std::move(rec));
            }
        }
    }
    return m;
}

void write_corpus(const Manifest& manifest, const fs::path& out_dir) {
    fs::create_directories(out_dir / "images");
    for (const auto& r : manifest.records) {
        if (r.pixels.empty()) throw DataError("record " + r.image_id + " has no pixels to write");
        write_png(out_dir / r.image_path, r.pixels);
    }
    write_manifest(manifest, out_dir / "manifest.csv");
}

Manifest generate_corpus(const CorpusSpec& spec, const fs::path& out_dir) {
    spec.validate();
    Manifest m = generate_corpus(spec);
    write_corpus(m, out_dir);
    m.root = out_dir;
    return m;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

const std::vector<std::string> kFixedColumns = {"image_id", "participant_id", "environment_id", "environment_type",
                                                "image_path"};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string format_value(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

void check_field(const std::string& v, const std::string& what) {
    if (v.find_first_of(",\n\r") != std::string::npos) throw DataError(what + " contains a separator: " + v);
}

} // namespace

void write_manifest(const Manifest& manifest, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    for (std::size_t i = 0; i < kFixedColumns.size(); ++i) out << (i ? "," : "") << kFixedColumns[i];
    for (const auto& o : manifest.outcome_names) out << ',' << o;
    out << '\n';
    for (const auto& r : manifest.records) {
        for (const auto* f : {&r.image_id, &r.participant_id, &r.environment_id, &r.environment_type, &r.image_path}) {
            check_field(*f, "field of " + r.image_id);
        }
        if (r.outcomes.size() != manifest.outcome_names.size()) {
            throw DataError("record " + r.image_id + " has wrong outcome count");
        }
        out << r.image_id << ',' << r.participant_id << ',' << r.environment_id << ',' << r.environment_type << ','
            << r.image_path;
        for (double v : r.outcomes) out << ',' << format_value(v);
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

Manifest load_manifest(const fs::path& path, bool load_pixels) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest not found: " + path.string());
    Manifest m;
    m.root = path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t n_fields = 0;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (!have_header) {
            if (fields.size() < kFixedColumns.size() ||
                !std::equal(kFixedColumns.begin(), kFixedColumns.end(), fields.begin())) {
                throw DataError("manifest header must start with image_id,participant_id,environment_id,"
                                "environment_type,image_path");
            }
            m.outcome_names.assign(fields.begin() + static_cast<long>(kFixedColumns.size()), fields.end());
            n_fields = fields.size();
            have_header = true;
            continue;
        }
        if (fields.size() != n_fields) {
            throw DataError("malformed manifest row " + std::to_string(line_no) + ": expected " +
                            std::to_string(n_fields) + " fields, got " + std::to_string(fields.size()));
        }
        ImageRecord r;
        r.image_id = fields[0];
        r.participant_id = fields[1];
        r.environment_id = fields[2];
        r.environment_type = fields[3];
        r.image_path = fields[4];
        if (r.image_id.empty() || r.participant_id.empty() || r.environment_id.empty()) {
            throw DataError("malformed manifest row " + std::to_string(line_no) + ": empty identifier");
        }
        for (std::size_t i = kFixedColumns.size(); i < fields.size(); ++i) {
            double v = 0;
            if (!parse_double(fields[i], v)) {
                throw DataError("malformed manifest row " + std::to_string(line_no) + ": non-numeric value '" +
                                fields[i] + "' in column " + m.outcome_names[i - kFixedColumns.size()]);
            }
            r.outcomes.push_back(v);
        }
        if (!ids.insert(r.image_id).second) {
            throw DataError("duplicate image_id '" + r.image_id + "' at manifest row " + std::to_string(line_no));
        }
        m.records.push_back(std::move(r));
    }
    if (load_pixels) {
        for (auto& r : m.records) r.pixels = read_png(m.root / r.image_path);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentationConfig::validate(int image_size) const {
    if (!(crop_scale_lo > 0.0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0)) {
        throw ConfigError("crop_scale_range must satisfy 0 < lo <= hi <= 1");
    }
    if (!(brightness_jitter >= 0.0 && brightness_jitter < 1.0)) throw ConfigError("brightness_jitter must lie in [0,1)");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
    check_probability(horizontal_flip_prob, "horizontal_flip_prob");
    if (output_size < 0) throw ConfigError("output_size must be nonnegative");
    if (image_size > 0) {
        if (std::sqrt(crop_scale_hi) * image_size < 2.0) {
            throw ConfigError("crop_scale_range upper bound leaves a degenerate crop window for image size " +
                              std::to_string(image_size));
        }
        if (std::sqrt(crop_scale_lo) * image_size < 2.0) {
            throw ConfigError("crop_scale_range lower bound leaves a degenerate crop window for image size " +
                              std::to_string(image_size));
        }
    }
}

Image augment(const Image& pixels, const AugmentationConfig& config, std::mt19937_64& rng) {
    if (pixels.empty() || pixels.data.size() != static_cast<std::size_t>(pixels.height) * pixels.width * 3) {
        throw ConfigError("augment: malformed pixel array");
    }
    const int out_h = config.output_size > 0 ? config.output_size : pixels.height;
    const int out_w = config.output_size > 0 ? config.output_size : pixels.width;

    const double area = config.crop_scale_lo == config.crop_scale_hi
                            ? config.crop_scale_hi
                            : std::uniform_real_distribution<double>(config.crop_scale_lo, config.crop_scale_hi)(rng);
    const double side = std::sqrt(area);
    const int cw = std::clamp(static_cast<int>(std::lround(side * pixels.width)), 1, pixels.width);
    const int ch = std::clamp(static_cast<int>(std::lround(side * pixels.height)), 1, pixels.height);
    const int x0 = std::uniform_int_distribution<int>(0, pixels.width - cw)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, pixels.height - ch)(rng);
    Image out = resample_window(pixels, x0, y0, cw, ch, out_h, out_w);

    if (config.horizontal_flip_prob > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.horizontal_flip_prob) {
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w / 2; ++x) {
                for (int c = 0; c < 3; ++c) std::swap(out.at(y, x, c), out.at(y, out_w - 1 - x, c));
            }
        }
    }
    if (config.brightness_jitter > 0.0) {
        const float gain = static_cast<float>(
            std::uniform_real_distribution<double>(1.0 - config.brightness_jitter, 1.0 + config.brightness_jitter)(rng));
        for (float& v : out.data) v *= gain;
    }
    if (config.noise_std > 0.0) {
        std::normal_distribution<float> noise(0.0f, static_cast<float>(config.noise_std));
        for (float& v : out.data) v += noise(rng);
    }
    clip_unit(out);
    return out;
}

} // namespace ihcc
