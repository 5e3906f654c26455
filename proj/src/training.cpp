#include "ihcc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace ihcc {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (!(tau_I > 0.0) || !(tau_C > 0.0)) throw ConfigError("temperatures must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be nonnegative");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in (0, 1]");
    sb.validate();
}

LossConfig TrainConfig::loss_config() const {
    LossConfig c;
    c.tau_instance = tau_I;
    c.tau_cluster = tau_C;
    c.sb = sb;
    c.use_participant_loss = use_participant_head;
    return c;
}

namespace {

json to_json(const ModelConfig& c) {
    return {{"encoder_kind", to_string(c.encoder_kind)}, {"image_size", c.image_size},
            {"feature_dim", c.feature_dim},             {"instance_dim", c.instance_dim},
            {"cch_size", c.cch_size},                   {"n_participants", c.n_participants},
            {"head_hidden_dim", c.head_hidden_dim}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.encoder_kind = parse_encoder_kind(j.at("encoder_kind").get<std::string>());
    c.image_size = j.at("image_size").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.instance_dim = j.at("instance_dim").get<int>();
    c.cch_size = j.at("cch_size").get<int>();
    c.n_participants = j.at("n_participants").get<int>();
    c.head_hidden_dim = j.at("head_hidden_dim").get<int>();
    return c;
}

json to_json(const TrainConfig& c) {
    const auto& a = c.augmentation;
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"tau_I", c.tau_I},
            {"tau_C", c.tau_C},
            {"sb",
             {{"alpha", c.sb.alpha},
              {"lambda_sb", c.sb.lambda_sb},
              {"eps_clamp", c.sb.eps_clamp},
              {"include_last_break", c.sb.include_last_break}}},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"augmentation",
             {{"crop_scale_lo", a.crop_scale_lo},
              {"crop_scale_hi", a.crop_scale_hi},
              {"brightness_jitter", a.brightness_jitter},
              {"noise_std", a.noise_std},
              {"horizontal_flip_prob", a.horizontal_flip_prob},
              {"output_size", a.output_size}}},
            {"use_participant_head", c.use_participant_head},
            {"bn_momentum", c.bn_momentum}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.tau_I = j.at("tau_I").get<double>();
    c.tau_C = j.at("tau_C").get<double>();
    const auto& sb = j.at("sb");
    c.sb.alpha = sb.at("alpha").get<double>();
    c.sb.lambda_sb = sb.at("lambda_sb").get<double>();
    c.sb.eps_clamp = sb.at("eps_clamp").get<double>();
    c.sb.include_last_break = sb.at("include_last_break").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    const auto& a = j.at("augmentation");
    c.augmentation.crop_scale_lo = a.at("crop_scale_lo").get<double>();
    c.augmentation.crop_scale_hi = a.at("crop_scale_hi").get<double>();
    c.augmentation.brightness_jitter = a.at("brightness_jitter").get<double>();
    c.augmentation.noise_std = a.at("noise_std").get<double>();
    c.augmentation.horizontal_flip_prob = a.at("horizontal_flip_prob").get<double>();
    c.augmentation.output_size = a.at("output_size").get<int>();
    c.use_participant_head = j.at("use_participant_head").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    return c;
}

json to_json(const EpochLog& e) {
    return {{"epoch", e.epoch},         {"steps", e.steps},       {"l_ins", e.loss.l_ins}, {"l_clu", e.loss.l_clu},
            {"l_ps", e.loss.l_ps},      {"l_sb", e.loss.l_sb},    {"total", e.loss.total}};
}

EpochLog epoch_log_from_json(const json& j) {
    EpochLog e;
    e.epoch = j.at("epoch").get<int>();
    e.steps = j.at("steps").get<int>();
    e.loss.l_ins = j.at("l_ins").get<double>();
    e.loss.l_clu = j.at("l_clu").get<double>();
    e.loss.l_ps = j.at("l_ps").get<double>();
    e.loss.l_sb = j.at("l_sb").get<double>();
    e.loss.total = j.at("total").get<double>();
    return e;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
    return m.allFinite();
}

MatD to_double(const MatF& m) { return m.cast<double>(); }
MatF to_float(const MatD& m) { return m.cast<float>(); }

// L2-regularized Adam step. The update is computed for every tensor before
// any is committed, so a non-finite result leaves the model untouched.
void adam_step(TrainState& s, const nn::ParamSet<float>& grads) {
    auto& params = s.model.params();
    auto& adam = s.adam;
    const double lr = s.train_config.learning_rate;
    const float wd = static_cast<float>(s.train_config.weight_decay);
    const std::int64_t t = adam.step + 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
    const float b1 = static_cast<float>(adam.beta1), b2 = static_cast<float>(adam.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float sqrt_bc2 = static_cast<float>(std::sqrt(bc2));
    const float eps = static_cast<float>(adam.eps);

    std::vector<MatF> new_p(params.size()), new_m(params.size()), new_v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.trainable[i]) continue;
        const MatF g = grads.values[i] + wd * params.values[i];
        if (!all_finite(g)) throw TrainingError(params.names[i], "non-finite gradient for parameter " + params.names[i]);
        new_m[i] = b1 * adam.m.values[i] + (1.0f - b1) * g;
        new_v[i] = b2 * adam.v.values[i] + (1.0f - b2) * g.cwiseProduct(g);
        new_p[i] = params.values[i].array() -
                   step_size * new_m[i].array() / (new_v[i].array().sqrt() / sqrt_bc2 + eps);
        if (!all_finite(new_p[i]) || !all_finite(new_v[i])) {
            throw TrainingError(params.names[i], "optimizer step would make parameter " + params.names[i] +
                                                     " non-finite");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.trainable[i]) continue;
        params.values[i] = std::move(new_p[i]);
        adam.m.values[i] = std::move(new_m[i]);
        adam.v.values[i] = std::move(new_v[i]);
    }
    adam.step = t;
}

void check_outputs(const ForwardOutput<float>& out) {
    if (!all_finite(out.features)) throw TrainingError("encoder", "non-finite backbone features");
    if (!all_finite(out.instance_embed)) throw TrainingError("l_ins", "non-finite instance head output");
    if (!all_finite(out.cluster_probs)) throw TrainingError("l_clu", "non-finite cluster head output");
    if (!all_finite(out.participant_probs)) throw TrainingError("l_ps", "non-finite participant head output");
}

void check_loss(const LossBreakdown& l) {
    const std::pair<const char*, double> parts[] = {
        {"l_ins", l.l_ins}, {"l_clu", l.l_clu}, {"l_ps", l.l_ps}, {"l_sb", l.l_sb}, {"total", l.total}};
    for (const auto& [name, v] : parts) {
        if (!std::isfinite(v)) throw TrainingError(name, std::string("non-finite loss component ") + name);
    }
}

ViewOutputs to_view(const ForwardOutput<float>& out) {
    return {to_double(out.instance_embed), to_double(out.cluster_probs), to_double(out.participant_probs)};
}

OutputGrads<float> to_grads(const ViewGrads& g) {
    OutputGrads<float> out;
    out.instance_embed = to_float(g.instance_embed);
    out.cluster_probs = to_float(g.cluster_probs);
    if (g.participant_probs.size()) out.participant_probs = to_float(g.participant_probs);
    return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open " + tmp + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw DataError("failed writing " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

std::string TrainConfig::diff(const TrainConfig& other) const {
    const json a = to_json(*this), b = to_json(other);
    std::string out;
    for (const auto& op : json::diff(a, b)) {
        if (!out.empty()) out += "; ";
        out += op.at("path").get<std::string>();
    }
    return out;
}

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& train_config) {
    model_config.validate();
    train_config.validate();
    train_config.augmentation.validate(model_config.image_size);
    TrainState s{model_config, train_config, init_model<float>(model_config, train_config.seed), {}, 0, {}};
    s.adam.m = s.model.params().zeros_like();
    s.adam.v = s.model.params().zeros_like();
    return s;
}

std::vector<int> participant_labels(const Manifest& manifest) {
    std::unordered_map<std::string, int> index;
    std::vector<int> labels;
    labels.reserve(manifest.size());
    for (const auto& r : manifest.records) {
        auto [it, inserted] = index.emplace(r.participant_id, static_cast<int>(index.size()));
        labels.push_back(it->second);
    }
    return labels;
}

void train(const Manifest& manifest, TrainState& s, const TrainHooks& hooks, int until_epoch) {
    const TrainConfig& tc = s.train_config;
    if (manifest.empty()) throw ConfigError("train: manifest is empty");
    const auto participants = manifest.participants();
    if (static_cast<int>(participants.size()) != s.model_config.n_participants) {
        throw ConfigError("train: manifest has " + std::to_string(participants.size()) +
                          " participants but the model expects " + std::to_string(s.model_config.n_participants));
    }
    for (const auto& r : manifest.records) {
        if (r.pixels.height != s.model_config.image_size || r.pixels.width != s.model_config.image_size) {
            throw DataError("train: image " + r.image_id + " is not " + std::to_string(s.model_config.image_size) +
                            "x" + std::to_string(s.model_config.image_size) + " (pixels loaded?)");
        }
    }
    if (until_epoch < 0) until_epoch = tc.epochs;
    if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

    const std::vector<int> labels = participant_labels(manifest);
    const LossConfig loss_cfg = tc.loss_config();
    const auto n = static_cast<int>(manifest.size());
    const float momentum = static_cast<float>(tc.bn_momentum);

    while (s.epochs_done < until_epoch) {
        const int epoch = s.epochs_done + 1;
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(tc.seed, 0x7065726dULL, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochLog elog;
        elog.epoch = epoch;
        for (int start = 0, step = 0; start < n; start += tc.batch_size, ++step) {
            const int end = std::min(n, start + tc.batch_size);
            std::mt19937_64 rng(derive_seed(tc.seed, 0x61756775ULL, epoch, step));
            std::vector<Image> view_a, view_b;
            std::vector<int> batch_labels;
            for (int i = start; i < end; ++i) {
                const auto& rec = manifest.records[order[i]];
                view_a.push_back(augment(rec.pixels, tc.augmentation, rng));
                view_b.push_back(augment(rec.pixels, tc.augmentation, rng));
                batch_labels.push_back(labels[order[i]]);
            }
            Tape<float> tape_a, tape_b;
            const auto out_a = s.model.forward(make_batch<float>(std::span<const Image>(view_a)), Mode::train, &tape_a);
            const auto out_b = s.model.forward(make_batch<float>(std::span<const Image>(view_b)), Mode::train, &tape_b);
            check_outputs(out_a);
            check_outputs(out_b);

            const TotalLoss loss = total_loss(to_view(out_a), to_view(out_b), batch_labels, loss_cfg, true);
            check_loss(loss.breakdown);

            nn::ParamSet<float> grads = s.model.params().zeros_like();
            s.model.backward(tape_a, to_grads(loss.grad_a), grads);
            s.model.backward(tape_b, to_grads(loss.grad_b), grads);
            adam_step(s, grads);
            s.model.update_running_stats(tape_a, momentum);
            s.model.update_running_stats(tape_b, momentum);

            elog.steps += 1;
            elog.loss.l_ins += loss.breakdown.l_ins;
            elog.loss.l_clu += loss.breakdown.l_clu;
            elog.loss.l_ps += loss.breakdown.l_ps;
            elog.loss.l_sb += loss.breakdown.l_sb;
            elog.loss.total += loss.breakdown.total;
        }
        const double k = elog.steps;
        elog.loss.l_ins /= k;
        elog.loss.l_clu /= k;
        elog.loss.l_ps /= k;
        elog.loss.l_sb /= k;
        elog.loss.total /= k;
        s.log.push_back(elog);
        s.epochs_done = epoch;
        if (hooks.on_epoch) hooks.on_epoch(s, elog);
        if (!hooks.checkpoint_dir.empty() && tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0) {
            save_checkpoint(hooks.checkpoint_dir / ("ckpt_epoch" + std::to_string(epoch) + ".bin"), s);
        }
    }
    if (!hooks.checkpoint_dir.empty()) save_checkpoint(hooks.checkpoint_dir / "final.bin", s);
}

TrainState train(const Manifest& manifest, const ModelConfig& model_config, const TrainConfig& train_config,
                 const TrainHooks& hooks) {
    TrainState s = init_train_state(model_config, train_config);
    train(manifest, s, hooks);
    return s;
}

namespace {

constexpr char kMagic[8] = {'I', 'H', 'C', 'C', 'C', 'K', 'P', 'T'};
constexpr char kEndMagic[8] = {'I', 'H', 'C', 'C', 'E', 'N', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
void put(std::string& out, const T& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_params(std::string& out, const nn::ParamSet<float>& p) {
    for (const auto& v : p.values) {
        put<std::int64_t>(out, v.rows());
        put<std::int64_t>(out, v.cols());
        out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(float));
    }
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}
    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw DataError("checkpoint " + path_ + " is truncated");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

void read_params(Reader& r, nn::ParamSet<float>& p, const std::string& path) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto rows = r.get<std::int64_t>(), cols = r.get<std::int64_t>();
        auto& v = p.values[i];
        if (rows != v.rows() || cols != v.cols()) {
            throw DataError("checkpoint " + path + ": tensor " + p.names[i] + " has shape " + std::to_string(rows) +
                            "x" + std::to_string(cols) + ", expected " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()));
        }
        const std::size_t bytes = static_cast<std::size_t>(v.size()) * sizeof(float);
        std::memcpy(v.data(), r.take(bytes), bytes);
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& s) {
    json header = {{"model_config", to_json(s.model_config)},
                   {"train_config", to_json(s.train_config)},
                   {"epochs_done", s.epochs_done},
                   {"adam_step", s.adam.step},
                   {"param_names", s.model.params().names}};
    header["log"] = json::array();
    for (const auto& e : s.log) header["log"].push_back(to_json(e));
    const std::string text = header.dump();

    std::string body;
    put<std::uint64_t>(body, text.size());
    body += text;
    put_params(body, s.model.params());
    put_params(body, s.adam.m);
    put_params(body, s.adam.v);

    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    out += body;
    put<std::uint64_t>(out, fnv1a(body.data(), body.size()));
    out.append(kEndMagic, sizeof(kEndMagic));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_atomic(path, out);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    const std::string name = path.string();
    Reader r(bytes, name);

    if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
        throw DataError(name + " is not an ihcc checkpoint");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw DataError("checkpoint " + name + " has format version " + std::to_string(version) + ", expected " +
                        std::to_string(kVersion));
    }
    const std::size_t body_start = r.pos();
    const auto header_len = r.get<std::uint64_t>();
    if (header_len > r.remaining()) throw DataError("checkpoint " + name + " is truncated");
    json header;
    try {
        header = json::parse(std::string(r.take(header_len), header_len));
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + name + " has a corrupt header: " + e.what());
    }

    TrainState s;
    try {
        s.model_config = model_config_from_json(header.at("model_config"));
        s.train_config = train_config_from_json(header.at("train_config"));
        s.epochs_done = header.at("epochs_done").get<int>();
        s.adam.step = header.at("adam_step").get<std::int64_t>();
        for (const auto& e : header.at("log")) s.log.push_back(epoch_log_from_json(e));
        s.model = ModelState<float>(s.model_config);
        if (header.at("param_names").get<std::vector<std::string>>() != s.model.params().names) {
            throw DataError("checkpoint " + name + ": parameter layout does not match its model config");
        }
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + name + " has a corrupt header: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError("checkpoint " + name + " has an invalid config: " + e.what());
    }
    s.adam.m = s.model.params().zeros_like();
    s.adam.v = s.model.params().zeros_like();
    read_params(r, s.model.params(), name);
    read_params(r, s.adam.m, name);
    read_params(r, s.adam.v, name);
    const std::size_t body_end = r.pos();
    const auto checksum = r.get<std::uint64_t>();
    if (checksum != fnv1a(bytes.data() + body_start, body_end - body_start)) {
        throw DataError("checkpoint " + name + " failed its checksum");
    }
    if (std::memcmp(r.take(sizeof(kEndMagic)), kEndMagic, sizeof(kEndMagic)) != 0 || r.remaining() != 0) {
        throw DataError("checkpoint " + name + " has trailing or corrupt data");
    }
    return s;
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    TrainState s = load_checkpoint(path);
    if (!(s.model_config == expected)) {
        throw ConfigError("checkpoint " + path.string() + " was trained with a different model config: " +
                          s.model_config.diff(expected));
    }
    return s;
}

ForwardOutput<float> predict(const ModelState<float>& model, const Manifest& manifest, int batch_size) {
    if (batch_size < 1) throw ConfigError("predict: batch_size must be at least 1");
    const std::size_t n = manifest.size();
    ForwardOutput<float> out;
    const auto& cfg = model.config();
    out.features.resize(static_cast<Eigen::Index>(n), cfg.feature_dim);
    out.instance_embed.resize(static_cast<Eigen::Index>(n), cfg.instance_dim);
    out.cluster_probs.resize(static_cast<Eigen::Index>(n), cfg.cch_size);
    out.participant_probs.resize(static_cast<Eigen::Index>(n), cfg.n_participants);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
        std::vector<Image> views;
        for (std::size_t i = start; i < end; ++i) {
            const auto& rec = manifest.records[i];
            if (rec.pixels.empty()) throw DataError("predict: pixels of " + rec.image_id + " are not loaded");
            views.push_back(center_view(rec.pixels, cfg.image_size));
        }
        const auto b = model.forward(make_batch<float>(std::span<const Image>(views)), Mode::eval);
        const auto rows = static_cast<Eigen::Index>(end - start), at = static_cast<Eigen::Index>(start);
        out.features.middleRows(at, rows) = b.features;
        out.instance_embed.middleRows(at, rows) = b.instance_embed;
        out.cluster_probs.middleRows(at, rows) = b.cluster_probs;
        out.participant_probs.middleRows(at, rows) = b.participant_probs;
    }
    return out;
}

} // namespace ihcc
