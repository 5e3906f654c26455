#include <doctest.h>

#include "ihcc/config.hpp"

using namespace ihcc;

TEST_CASE("defaults survive a write and reload") {
    const RunConfig d;
    const auto text = config_to_string(d);
    CHECK(text.find("[sb]") != std::string::npos);
    CHECK(text.find("; porch.smoking = 0.9") != std::string::npos);
    const auto back = parse_config(text);
    CHECK(back.model == d.model);
    CHECK(back.train.diff(d.train).empty());
    CHECK(back.corpus.outcome_rates.empty());
    CHECK(config_to_string(back) == text);
}

TEST_CASE("config values are applied") {
    const auto c = parse_config(R"(
[corpus]
n_participants = 4
outcome_names = smoking, stress
[outcome_rates]
porch.smoking = 0.8
[link_strength]
P01 = 0.25
[model]
encoder_kind = resnet34
cch_size = 12
[train]
use_participant_head = false
learning_rate = 1e-3
[sb]
alpha = 3
[augment]
noise_std = 0
[eval]
sort_outcome = stress
)");
    CHECK(c.corpus.n_participants == 4);
    CHECK(c.corpus.outcome_names == std::vector<std::string>{"smoking", "stress"});
    CHECK(c.corpus.outcome_rates.at("porch").at("smoking") == 0.8);
    CHECK(c.corpus.link_strength("P01") == 0.25);
    CHECK(c.model.encoder_kind == EncoderKind::resnet34);
    CHECK(c.model.cch_size == 12);
    CHECK_FALSE(c.train.use_participant_head);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.sb.alpha == 3.0);
    CHECK(c.train.augmentation.noise_std == 0.0);
    CHECK(c.eval.sort_outcome == "stress");
    const auto again = parse_config(config_to_string(c));
    CHECK(again.corpus.outcome_rates == c.corpus.outcome_rates);
    CHECK(again.corpus.participant_link_strength == c.corpus.participant_link_strength);
    CHECK(again.train.diff(c.train).empty());
}

TEST_CASE("config errors name the entry") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    CHECK(message("[modle]\nx = 1\n").find("[modle]") != std::string::npos);
    CHECK(message("[model]\ncch = 3\n").find("cch") != std::string::npos);
    CHECK(message("[model]\ncch_size = many\n").find("cch_size") != std::string::npos);
    CHECK(message("[model]\ncch_size = 1\n").find("accepted") == std::string::npos);
    CHECK(message("[train]\nuse_participant_head = maybe\n").find("use_participant_head") != std::string::npos);
    CHECK(message("[outcome_rates]\nporch = 0.5\n").find("porch") != std::string::npos);
    CHECK(message("[outcome_rates]\nporch.smoking = 1.5\n").find("accepted") == std::string::npos);
    CHECK(message("[model\n").find("line") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/ihcc.cfg"), ConfigError);
}
