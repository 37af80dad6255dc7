#include "smug/config.hpp"

#include <set>
#include <stdexcept>

#include "json.hpp"
#include "smug/io.hpp"
#include "smug/rng.hpp"

namespace smug {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw std::invalid_argument("config: unknown key '" +
                              (section.empty() ? key : section + "." + key) + "'");
}

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) bad_key(section, key);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void parse_dataset(const json& j, RunConfig::DatasetSection& s) {
  check_keys(j, "dataset",
             {"height", "width", "n_coils", "train", "val", "test", "seed", "noise_std"});
  get_to(j, "height", s.height);
  get_to(j, "width", s.width);
  get_to(j, "n_coils", s.n_coils);
  get_to(j, "train", s.train);
  get_to(j, "val", s.val);
  get_to(j, "test", s.test);
  get_to(j, "seed", s.seed);
  get_to(j, "noise_std", s.noise_std);
}

void parse_acquisition(const json& j, RunConfig::AcquisitionSection& s) {
  check_keys(j, "acquisition", {"acceleration", "acs_rows", "mask_seed"});
  get_to(j, "acceleration", s.acceleration);
  get_to(j, "acs_rows", s.acs_rows);
  get_to(j, "mask_seed", s.mask_seed);
}

void parse_denoiser(const json& j, DenoiserConfig& d, uint64_t& init_seed) {
  check_keys(j, "denoiser", {"depth", "channels", "kernel", "residual", "init_seed"});
  get_to(j, "depth", d.depth);
  get_to(j, "channels", d.channels);
  get_to(j, "kernel", d.kernel);
  get_to(j, "residual", d.residual);
  get_to(j, "init_seed", init_seed);
}

void parse_recon(const json& j, recon::ReconConfig& r) {
  check_keys(j, "recon",
             {"mode", "unroll_steps", "lambda", "sigma", "mc_samples", "eval_mc_samples",
              "cg_tol", "cg_max_iter", "seed"});
  if (j.contains("mode")) r.mode = recon::mode_from_name(j.at("mode").get<std::string>());
  get_to(j, "unroll_steps", r.unroll_steps);
  get_to(j, "lambda", r.lambda);
  get_to(j, "sigma", r.sigma);
  get_to(j, "mc_samples", r.mc_samples);
  get_to(j, "eval_mc_samples", r.eval_mc_samples);
  get_to(j, "cg_tol", r.cg_tol);
  get_to(j, "cg_max_iter", r.cg_max_iter);
  get_to(j, "seed", r.seed);
}

void parse_train(const json& j, train::TrainConfig& t) {
  check_keys(j, "train",
             {"epochs", "lr_initial", "decay_start_epoch", "beta1", "beta2", "batch_size",
              "lambda_ell", "seed", "ustab_reference", "ustab_fresh_noise", "log_wall_time"});
  get_to(j, "epochs", t.epochs);
  get_to(j, "lr_initial", t.lr_initial);
  get_to(j, "decay_start_epoch", t.decay_start_epoch);
  get_to(j, "beta1", t.beta1);
  get_to(j, "beta2", t.beta2);
  get_to(j, "batch_size", t.batch_size);
  get_to(j, "lambda_ell", t.lambda_ell);
  get_to(j, "seed", t.seed);
  if (j.contains("ustab_reference"))
    t.ustab_reference =
        train::ustab_reference_from_name(j.at("ustab_reference").get<std::string>());
  get_to(j, "ustab_fresh_noise", t.ustab_fresh_noise);
  get_to(j, "log_wall_time", t.log_wall_time);
}

void parse_attack(const json& j, AttackConfig& a) {
  check_keys(j, "attack",
             {"epsilon", "steps", "step_size", "restarts", "seed", "attack_base_model"});
  get_to(j, "epsilon", a.epsilon);
  get_to(j, "steps", a.steps);
  get_to(j, "step_size", a.step_size);
  get_to(j, "restarts", a.restarts);
  get_to(j, "seed", a.seed);
  get_to(j, "attack_base_model", a.attack_base_model);
}

void parse_model_ref(const json& j, RunConfig::ModelRef& m) {
  check_keys(j, "sweep.models[]", {"name", "checkpoint", "mode", "sigma", "mc_samples"});
  if (!j.contains("name") || !j.contains("checkpoint"))
    throw std::invalid_argument("config: sweep.models entries need 'name' and 'checkpoint'");
  j.at("name").get_to(m.name);
  j.at("checkpoint").get_to(m.checkpoint);
  get_to(j, "mode", m.mode);
  get_to(j, "sigma", m.sigma);
  get_to(j, "mc_samples", m.mc_samples);
}

void parse_sweep(const json& j, RunConfig::SweepSection& s) {
  check_keys(j, "sweep", {"axis", "values", "noise_sigma", "eval_seed", "models"});
  get_to(j, "axis", s.axis);
  get_to(j, "values", s.values);
  get_to(j, "noise_sigma", s.noise_sigma);
  get_to(j, "eval_seed", s.eval_seed);
  if (j.contains("models")) {
    s.models.clear();
    for (const auto& mj : j.at("models")) {
      RunConfig::ModelRef m;
      parse_model_ref(mj, m);
      s.models.push_back(std::move(m));
    }
  }
}

void parse_ablation(const json& j, RunConfig::AblationSection& s) {
  check_keys(j, "ablation", {"variants", "values"});
  if (j.contains("variants")) {
    s.variants.clear();
    const json& v = j.at("variants");
    if (!v.is_object())
      throw std::invalid_argument("config: ablation.variants must map variant -> checkpoint");
    for (const auto& [name, path] : v.items())
      s.variants.emplace_back(name, path.get<std::string>());
  }
  get_to(j, "values", s.values);
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.height < 8 || dataset.width < 8)
    throw std::invalid_argument("config: dataset extents must be at least 8");
  if (dataset.n_coils < 1) throw std::invalid_argument("config: n_coils must be >= 1");
  if (dataset.train < 0 || dataset.val < 0 || dataset.test < 0)
    throw std::invalid_argument("config: split counts must be >= 0");
  if (dataset.noise_std < 0.0) throw std::invalid_argument("config: noise_std must be >= 0");
  if (acquisition.acceleration < 1)
    throw std::invalid_argument("config: acceleration must be >= 1");
  denoiser.validate();
  recon.validate();
  train.validate();
  attack.validate();
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, "",
             {"dataset", "acquisition", "denoiser", "recon", "train", "attack", "sweep",
              "ablation"});
  RunConfig cfg;
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
  if (j.contains("acquisition")) parse_acquisition(j.at("acquisition"), cfg.acquisition);
  if (j.contains("denoiser")) parse_denoiser(j.at("denoiser"), cfg.denoiser, cfg.denoiser_init_seed);
  if (j.contains("recon")) parse_recon(j.at("recon"), cfg.recon);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("attack")) parse_attack(j.at("attack"), cfg.attack);
  if (j.contains("sweep")) parse_sweep(j.at("sweep"), cfg.sweep);
  if (j.contains("ablation")) parse_ablation(j.at("ablation"), cfg.ablation);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return parse_config(io::read_text_file(path));
}

std::string effective_config_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = {{"height", cfg.dataset.height},   {"width", cfg.dataset.width},
                  {"n_coils", cfg.dataset.n_coils}, {"train", cfg.dataset.train},
                  {"val", cfg.dataset.val},         {"test", cfg.dataset.test},
                  {"seed", cfg.dataset.seed},       {"noise_std", cfg.dataset.noise_std}};
  j["acquisition"] = {{"acceleration", cfg.acquisition.acceleration},
                      {"acs_rows", cfg.acquisition.acs_rows},
                      {"mask_seed", cfg.acquisition.mask_seed}};
  j["denoiser"] = {{"depth", cfg.denoiser.depth},
                   {"channels", cfg.denoiser.channels},
                   {"kernel", cfg.denoiser.kernel},
                   {"residual", cfg.denoiser.residual},
                   {"init_seed", cfg.denoiser_init_seed}};
  j["recon"] = {{"mode", recon::mode_name(cfg.recon.mode)},
                {"unroll_steps", cfg.recon.unroll_steps},
                {"lambda", cfg.recon.lambda},
                {"sigma", cfg.recon.sigma},
                {"mc_samples", cfg.recon.mc_samples},
                {"eval_mc_samples", cfg.recon.eval_mc_samples},
                {"cg_tol", cfg.recon.cg_tol},
                {"cg_max_iter", cfg.recon.cg_max_iter},
                {"seed", cfg.recon.seed}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"lr_initial", cfg.train.lr_initial},
                {"decay_start_epoch", cfg.train.decay_start_epoch},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"batch_size", cfg.train.batch_size},
                {"lambda_ell", cfg.train.lambda_ell},
                {"seed", cfg.train.seed},
                {"ustab_reference", train::ustab_reference_name(cfg.train.ustab_reference)},
                {"ustab_fresh_noise", cfg.train.ustab_fresh_noise},
                {"log_wall_time", cfg.train.log_wall_time}};
  j["attack"] = {{"epsilon", cfg.attack.epsilon},
                 {"steps", cfg.attack.steps},
                 {"step_size", cfg.attack.step_size},
                 {"restarts", cfg.attack.restarts},
                 {"seed", cfg.attack.seed},
                 {"attack_base_model", cfg.attack.attack_base_model}};
  json models = json::array();
  for (const auto& m : cfg.sweep.models)
    models.push_back({{"name", m.name},
                      {"checkpoint", m.checkpoint},
                      {"mode", m.mode},
                      {"sigma", m.sigma},
                      {"mc_samples", m.mc_samples}});
  j["sweep"] = {{"axis", cfg.sweep.axis},
                {"values", cfg.sweep.values},
                {"noise_sigma", cfg.sweep.noise_sigma},
                {"eval_seed", cfg.sweep.eval_seed},
                {"models", models}};
  json variants = json::object();
  for (const auto& [name, path] : cfg.ablation.variants) variants[name] = path;
  j["ablation"] = {{"variants", variants}, {"values", cfg.ablation.values}};
  return j.dump(2) + "\n";
}

void apply_seed_override(RunConfig& cfg, uint64_t seed) {
  cfg.dataset.seed = mix_seed(seed, 1);
  cfg.acquisition.mask_seed = mix_seed(seed, 2);
  cfg.denoiser_init_seed = mix_seed(seed, 3);
  cfg.recon.seed = mix_seed(seed, 4);
  cfg.train.seed = mix_seed(seed, 5);
  cfg.attack.seed = mix_seed(seed, 6);
  cfg.sweep.eval_seed = mix_seed(seed, 7);
}

}  // namespace smug
