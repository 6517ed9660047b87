#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "unifloral/numerics/errors.hpp"
#include "unifloral/presets/presets.hpp"

using namespace unifloral;
using nlohmann::json;

namespace {

// One column of the published hyperparameter table, transcribed by hand.
// Ranged cells are checked separately.
struct Column {
  const char* name;
  json cells;
};

const std::vector<Column>& table() {
  static const std::vector<Column> t = {
      {"iql", {{"batch_size", 256}, {"actor_lr", 3e-4}, {"critic_lr", 3e-4}, {"lr_schedule", "cosine"},
               {"gamma", 0.99}, {"polyak_step", 0.005}, {"normalize_obs", true}, {"actor_layers", 2},
               {"actor_hidden", 256}, {"actor_layer_norm", false}, {"deterministic_policy", false},
               {"deterministic_eval", true}, {"tanh_mean", true}, {"learn_std", true},
               {"log_std_min", -20.0}, {"log_std_max", 2.0}, {"num_critics", 2}, {"critic_layers", 2},
               {"critic_hidden", 256}, {"critic_layer_norm", false}, {"actor_bc_coef", 1.0},
               {"actor_q_coef", 0.0}, {"use_q_target_in_actor", false}, {"normalize_q_loss", false},
               {"q_aggregation", "min"}, {"use_awr", true}, {"awr_clip", 100.0}, {"critic_bc_coef", 0.0},
               {"critic_updates_per_step", 1}, {"diversity_coef", 0.0}, {"policy_noise", 0.0},
               {"noise_clip", 0.0}, {"use_target_actor", false}, {"use_entropy_loss", false}}},
      {"sac_n", {{"batch_size", 256}, {"actor_lr", 3e-4}, {"critic_lr", 3e-4}, {"lr_schedule", "constant"},
                 {"gamma", 0.99}, {"polyak_step", 0.005}, {"normalize_obs", false}, {"actor_layers", 3},
                 {"actor_hidden", 256}, {"actor_layer_norm", false}, {"deterministic_policy", false},
                 {"deterministic_eval", false}, {"tanh_mean", false}, {"learn_std", false},
                 {"log_std_min", -5.0}, {"log_std_max", 2.0}, {"critic_layers", 3}, {"critic_hidden", 256},
                 {"critic_layer_norm", false}, {"actor_bc_coef", 0.0}, {"actor_q_coef", 1.0},
                 {"use_q_target_in_actor", false}, {"normalize_q_loss", false}, {"q_aggregation", "min"},
                 {"use_awr", false}, {"awr_clip", 100.0}, {"critic_bc_coef", 0.0},
                 {"critic_updates_per_step", 1}, {"diversity_coef", 0.0}, {"policy_noise", 0.0},
                 {"noise_clip", 0.0}, {"use_target_actor", false}, {"use_entropy_loss", true},
                 {"actor_entropy_coef", 1.0}, {"critic_entropy_coef", 1.0}, {"use_value_target", false}}},
      {"edac", {{"batch_size", 256}, {"actor_lr", 3e-4}, {"critic_lr", 3e-4}, {"lr_schedule", "constant"},
                {"gamma", 0.99}, {"polyak_step", 0.005}, {"normalize_obs", false}, {"actor_layers", 3},
                {"actor_hidden", 256}, {"actor_layer_norm", false}, {"deterministic_policy", false},
                {"deterministic_eval", false}, {"tanh_mean", false}, {"learn_std", false},
                {"log_std_min", -5.0}, {"log_std_max", 2.0}, {"critic_layers", 3}, {"critic_hidden", 256},
                {"critic_layer_norm", false}, {"actor_bc_coef", 0.0}, {"actor_q_coef", 1.0},
                {"use_q_target_in_actor", false}, {"normalize_q_loss", false}, {"q_aggregation", "min"},
                {"use_awr", false}, {"awr_clip", 100.0}, {"critic_bc_coef", 0.0},
                {"critic_updates_per_step", 1}, {"policy_noise", 0.0}, {"noise_clip", 0.0},
                {"use_target_actor", false}, {"use_entropy_loss", true}, {"actor_entropy_coef", 1.0},
                {"critic_entropy_coef", 1.0}, {"use_value_target", false}}},
      {"td3_bc", {{"batch_size", 256}, {"actor_lr", 3e-4}, {"critic_lr", 3e-4}, {"lr_schedule", "constant"},
                  {"gamma", 0.99}, {"polyak_step", 0.005}, {"normalize_obs", true}, {"actor_layers", 2},
                  {"actor_hidden", 256}, {"actor_layer_norm", false}, {"deterministic_policy", true},
                  {"log_std_min", -5.0}, {"log_std_max", 2.0}, {"num_critics", 2}, {"critic_layers", 2},
                  {"critic_hidden", 256}, {"critic_layer_norm", false}, {"actor_bc_coef", 1.0},
                  {"use_q_target_in_actor", false}, {"normalize_q_loss", true}, {"q_aggregation", "first"},
                  {"use_awr", false}, {"awr_clip", 100.0}, {"critic_bc_coef", 0.0},
                  {"critic_updates_per_step", 2}, {"diversity_coef", 0.0}, {"policy_noise", 0.2},
                  {"noise_clip", 0.5}, {"use_target_actor", true}, {"use_entropy_loss", false},
                  {"use_value_target", false}}},
      {"rebrac", {{"batch_size", 1024}, {"actor_lr", 1e-3}, {"critic_lr", 1e-3}, {"lr_schedule", "constant"},
                  {"gamma", 0.99}, {"polyak_step", 0.005}, {"normalize_obs", false}, {"actor_layers", 3},
                  {"actor_hidden", 256}, {"actor_layer_norm", true}, {"deterministic_policy", true},
                  {"log_std_min", -5.0}, {"log_std_max", 2.0}, {"num_critics", 2}, {"critic_layers", 3},
                  {"critic_hidden", 256}, {"critic_layer_norm", true}, {"actor_q_coef", 1.0},
                  {"use_q_target_in_actor", false}, {"normalize_q_loss", true}, {"q_aggregation", "min"},
                  {"use_awr", false}, {"awr_clip", 100.0}, {"critic_updates_per_step", 2},
                  {"diversity_coef", 0.0}, {"policy_noise", 0.2}, {"noise_clip", 0.5},
                  {"use_target_actor", true}, {"use_entropy_loss", false}, {"use_value_target", false}}},
  };
  return t;
}

}  // namespace

TEST_CASE("registry fidelity: every fixed table cell matches the template") {
  for (const auto& col : table()) {
    const auto spec = preset(col.name);
    const json base = config_to_json(spec.base);
    for (const auto& [key, value] : col.cells.items()) {
      CAPTURE(col.name);
      CAPTURE(key);
      CHECK(spec.ranges.count(key) == 0);
      CHECK(base.at(key) == value);
    }
  }
}

TEST_CASE("registry fidelity: bracketed table cells are ranges") {
  using K = HyperRange::Kind;
  struct Expect {
    const char* method;
    const char* key;
    K kind;
    double low, high;
  };
  const Expect expected[] = {
      {"sac_n", "num_critics", K::int_uniform, 5, 200},
      {"edac", "num_critics", K::int_uniform, 10, 50},
      {"edac", "diversity_coef", K::log_uniform, 1, 1e3},
      {"td3_bc", "actor_q_coef", K::uniform, 1.0, 4.0},
      {"rebrac", "actor_bc_coef", K::log_uniform, 5e-4, 1.0},
      {"rebrac", "critic_bc_coef", K::uniform, 0.0, 0.1},
      {"iql", "awr_temperature", K::uniform, 0.5, 10.0},
      {"iql", "value_expectile", K::uniform, 0.5, 0.9},
  };
  for (const auto& e : expected) {
    CAPTURE(e.method);
    CAPTURE(e.key);
    const auto spec = preset(e.method);
    REQUIRE(spec.ranges.count(e.key) == 1);
    const auto& r = spec.ranges.at(e.key);
    CHECK(r.kind == e.kind);
    CHECK(r.low == e.low);
    CHECK(r.high == e.high);
  }
  CHECK(preset("edac").ranges.at("diversity_coef").zero_probability > 0.0);
  CHECK(preset("sac_n").ranges.size() == 1);
  CHECK(preset("td3_bc").ranges.size() == 1);
  CHECK(preset("rebrac").ranges.size() == 2);
  CHECK(preset("iql").ranges.size() == 2);
  CHECK(preset("edac").ranges.size() == 2);
}

TEST_CASE("td3_bc noise and rebrac headline settings") {
  const auto td3 = preset("td3_bc").base;
  CHECK(td3.policy_noise == 0.2);
  CHECK(td3.noise_clip == 0.5);
  const auto rb = preset("rebrac").base;
  CHECK(rb.batch_size == 1024);
  CHECK(rb.actor_lr == 1e-3);
  CHECK(rb.critic_layer_norm);
}

TEST_CASE("td3_awr is rebrac plus the IQL advantage weighting") {
  auto awr = preset("td3_awr");
  auto rb = preset("rebrac");
  CHECK(awr.base.use_awr);
  CHECK(awr.base.awr_clip == 100.0);
  CHECK(awr.ranges.at("awr_temperature") == preset("iql").ranges.at("awr_temperature"));
  awr.name = rb.name;
  awr.base.use_awr = false;
  awr.ranges.erase("awr_temperature");
  CHECK(awr == rb);
}

TEST_CASE("model-based presets") {
  const auto mopo = preset("mopo");
  CHECK(mopo.model_based);
  CHECK(mopo.base.num_critics == 10);
  CHECK(mopo.base.use_entropy_loss);
  CHECK(mopo.base.model_based->real_ratio == 0.05);
  CHECK(mopo.ranges.at("model_based.pessimism_coef") == HyperRange::log_uniform(0.1, 10.0));
  CHECK(mopo.ranges.at("model_based.rollout_length") == HyperRange::choice({1, 5}));

  const auto morel = preset("morel");
  CHECK(morel.base.model_based->use_morel_halt);
  CHECK(morel.ranges.at("model_based.morel_pessimism") == HyperRange::uniform(0.5, 2.0));
  CHECK(morel.ranges.at("model_based.rollout_length") == HyperRange::choice({25, 50}));

  auto mobrac = preset("mobrac");
  auto rb = preset("rebrac");
  CHECK(mobrac.base.model_based == mopo.base.model_based);
  CHECK(mobrac.ranges.at("model_based.pessimism_coef") == mopo.ranges.at("model_based.pessimism_coef"));
  mobrac.base.model_based.reset();
  CHECK(mobrac.base == rb.base);
  CHECK(mobrac.ranges.at("actor_bc_coef") == rb.ranges.at("actor_bc_coef"));
}

TEST_CASE("bc preset") {
  const auto bc = preset("bc").base;
  CHECK(bc.num_critics == 0);
  CHECK(bc.actor_q_coef == 0.0);
  CHECK(bc.actor_bc_coef == 1.0);
  CHECK(bc.deterministic_policy);
  CHECK(!bc.has_value_net());
  CHECK(bc.batch_size == 256);
  CHECK(bc.actor_lr == 3e-4);
}

TEST_CASE("unknown preset names list the valid ones") {
  try {
    preset("cql");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : preset_names()) CHECK(msg.find(n) != std::string::npos);
  }
  CHECK(preset_names().size() == 10);
}

TEST_CASE("sampled configs always validate and are deterministic per seed") {
  for (const auto& n : preset_names()) {
    CAPTURE(n);
    const auto spec = preset(n);
    spec.validate();
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto c = sample_config(spec, s);
      CHECK_NOTHROW(c.validate());
      if (s < 5) CHECK(c == sample_config(spec, s));
    }
    CHECK_NOTHROW(midpoint_config(spec).validate());
  }
}

TEST_CASE("an all-fixed spec samples its template") {
  auto spec = preset("bc");
  spec.ranges["gamma"] = HyperRange::fixed_value(0.99);
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto c = sample_config(spec, s);
    CHECK(c.seed == mix_seed(s, 1));
    c.seed = spec.base.seed;
    CHECK(c == spec.base);
  }
}

TEST_CASE("IQL value_expectile samples are uniform on [0.5, 0.9]") {
  const auto spec = preset("iql");
  std::vector<int> deciles(10, 0);
  double lo = 1, hi = 0;
  constexpr int n = 10000;
  for (int s = 0; s < n; ++s) {
    const double v = sample_config(spec, static_cast<std::uint64_t>(s)).value_expectile;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++deciles[std::min(9, static_cast<int>((v - 0.5) / 0.04))];
  }
  CHECK(lo >= 0.5);
  CHECK(hi <= 0.9);
  for (int c : deciles) CHECK(std::abs(c - n / 10) <= n / 100);
}

TEST_CASE("range kinds") {
  Rng rng(3);
  const auto iu = HyperRange::int_uniform(2, 4);
  std::set<long long> seen;
  for (int i = 0; i < 200; ++i) seen.insert(iu.sample(rng).get<long long>());
  CHECK(seen == std::set<long long>{2, 3, 4});

  const auto lu = HyperRange::log_uniform(1e-3, 1e3, 0.25);
  int zeros = 0, below_one = 0;
  for (int i = 0; i < 4000; ++i) {
    const double v = lu.sample(rng).get<double>();
    if (v == 0.0) ++zeros;
    else if (v < 1.0) ++below_one;
  }
  CHECK(std::abs(zeros - 1000) < 120);
  CHECK(std::abs(below_one - 1500) < 150);

  CHECK_THROWS_AS(HyperRange::uniform(2, 1).validate(), ConfigError);
  CHECK_THROWS_AS(HyperRange::log_uniform(0, 1).validate(), ConfigError);
  CHECK_THROWS_AS(HyperRange::choice({}).validate(), ConfigError);
}

TEST_CASE("midpoints") {
  const auto rb = midpoint_config(preset("rebrac"));
  CHECK(rb.actor_bc_coef == doctest::Approx(std::sqrt(5e-4)));
  CHECK(rb.critic_bc_coef == doctest::Approx(0.05));
  CHECK(midpoint_config(preset("sac_n")).num_critics == 102);
  CHECK(midpoint_config(preset("mopo")).model_based->rollout_length == 1);
}

TEST_CASE("toy scale caps width and batch only") {
  auto c = preset("rebrac").base;
  auto orig = c;
  apply_toy_scale(c);
  CHECK(c.actor_hidden == kToyHidden);
  CHECK(c.critic_hidden == kToyHidden);
  CHECK(c.batch_size == kToyBatch);
  c.actor_hidden = orig.actor_hidden;
  c.critic_hidden = orig.critic_hidden;
  c.batch_size = orig.batch_size;
  CHECK(c == orig);
}

TEST_CASE("method files round trip and reject unknown keys") {
  const auto dir = std::filesystem::temp_directory_path() / "unifloral_presets";
  std::filesystem::create_directories(dir);
  for (const auto& n : preset_names()) {
    const auto spec = preset(n);
    CHECK(method_from_json(method_to_json(spec)) == spec);
    const auto path = (dir / (n + ".json")).string();
    save_method_file(spec, path);
    CHECK(load_method_file(path) == spec);
  }
  auto j = method_to_json(preset("iql"));
  j["ranges"]["not_a_field"] = json{{"kind", "uniform"}, {"low", 0}, {"high", 1}};
  CHECK_THROWS_AS(method_from_json(j), ConfigError);
  j = method_to_json(preset("iql"));
  j["base"]["bogus"] = 1;
  CHECK_THROWS_AS(method_from_json(j), ConfigError);
  CHECK_THROWS_AS(load_method_file((dir / "missing.json").string()), IoError);
}

TEST_CASE("cross reference lists every preset and ranged cell") {
  const auto doc = preset_cross_reference();
  for (const auto& n : preset_names()) CHECK(doc.find("| " + n + " |") != std::string::npos);
  CHECK(doc.find("int[5, 200]") != std::string::npos);
  CHECK(doc.find("logU[0.0005, 1]") != std::string::npos);
  CHECK(doc.find("| model_based.rollout_length |") != std::string::npos);
}
