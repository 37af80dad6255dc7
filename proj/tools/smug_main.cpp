// smug: smoothed unrolled MRI reconstruction at desk scale.
//
// Subcommands cover the full pipeline: synthetic data generation, denoiser
// pre-training, vanilla baseline training, stability fine-tuning,
// reconstruction, PGD attacks, robustness sweeps, the UStab reference
// ablation, and report assembly.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smug/config.hpp"
#include "smug/io.hpp"
#include "smug/metrics.hpp"
#include "smug/parallel.hpp"
#include "smug/phantom.hpp"
#include "smug/rng.hpp"
#include "smug/sweep.hpp"
#include "smug/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smug;

namespace {

constexpr const char* kImageMagic = "SMUGIMG1";

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  int threads = 0;
  bool force = false;
  std::optional<uint64_t> seed;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  if (args.seed) apply_seed_override(cfg, *args.seed);
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("--out is required");
  fs::create_directories(dir);
}

void guard_overwrite(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw std::invalid_argument(path + " exists; pass --force to overwrite");
}

void write_effective_config(const RunConfig& cfg, const std::string& out_dir) {
  io::write_text_file((fs::path(out_dir) / "effective_config.json").string(),
                      effective_config_json(cfg));
}

mri::AcquisitionModel model_from_config(const RunConfig& cfg) {
  return mri::make_model(
      mri::build_cartesian_mask(cfg.dataset.height, cfg.dataset.width,
                                cfg.acquisition.acceleration, cfg.acquisition.acs_rows,
                                cfg.acquisition.mask_seed),
      mri::synth_sensitivities(cfg.dataset.height, cfg.dataset.width, cfg.dataset.n_coils));
}

std::string split_path(const std::string& data_dir, const std::string& split) {
  return (fs::path(data_dir) / (split + ".smds")).string();
}

data::Dataset load_split(const std::string& data_dir, const std::string& split) {
  if (data_dir.empty()) throw std::invalid_argument("--data is required");
  return data::load_dataset(split_path(data_dir, split));
}

train::Checkpoint load_checkpoint_arg(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument("--" + what + " is required");
  if (!fs::exists(path))
    throw std::invalid_argument(what + " checkpoint not found: " + path);
  return train::load_checkpoint(path);
}

// A checkpoint may be evaluated under a different mode only when the
// combination is meaningful: any mode degenerates to the trained pipeline at
// sigma = 0, and rs-e2e wraps a trained vanilla model.
void check_mode_compatible(const train::Checkpoint& ck, const recon::ReconConfig& cfg) {
  const std::string want = recon::mode_name(cfg.mode);
  if (ck.trained_mode.empty() || ck.trained_mode == "init" || ck.trained_mode == "pretrain")
    return;
  if (ck.trained_mode == want) return;
  if (cfg.sigma == 0.0) return;
  if (ck.trained_mode == "vanilla" && cfg.mode == recon::Mode::rs_e2e) return;
  throw std::invalid_argument("checkpoint was trained for mode '" + ck.trained_mode +
                              "' but the config requests '" + want +
                              "' with sigma > 0; pick a matching mode or sigma = 0");
}

void check_denoiser_compatible(const train::Checkpoint& ck, const DenoiserConfig& cfg) {
  if (!(ck.params.config == cfg))
    throw std::invalid_argument(
        "checkpoint denoiser architecture does not match the config (depth/channels/kernel/"
        "residual)");
}

void write_image_blob(const std::string& path, const ad::Tensor& img, int index,
                      const std::string& kind) {
  json h;
  h["format_version"] = 1;
  h["kind"] = kind;
  h["height"] = img.shape[0];
  h["width"] = img.shape[1];
  h["index"] = index;
  io::write_blob(path, kImageMagic, std::move(h), img.data);
}

std::string metric_csv_value(const PsnrValue& v) {
  return v.is_infinite ? "inf" : io::format_double(v.db);
}

recon::ReconConfig eval_recon_config(const RunConfig& cfg) {
  recon::ReconConfig rc = cfg.recon;
  if (rc.eval_mc_samples > 0) rc.mc_samples = rc.eval_mc_samples;
  return rc;
}

// ---------------------------------------------------------------- commands

int cmd_generate_data(const CommonArgs& args, std::optional<int> accel_override) {
  RunConfig cfg = resolve_config(args);
  if (accel_override) cfg.acquisition.acceleration = *accel_override;
  cfg.validate();
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  for (const char* split : {"train", "val", "test"})
    guard_overwrite(split_path(args.out_dir, split), args.force);

  mri::AcquisitionModel model = model_from_config(cfg);
  const int counts[3] = {cfg.dataset.train, cfg.dataset.val, cfg.dataset.test};
  const char* splits[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    data::Dataset ds = data::generate_dataset(splits[i], counts[i], model, cfg.dataset.seed,
                                              cfg.dataset.noise_std, threads);
    data::save_dataset(ds, split_path(args.out_dir, splits[i]));
  }
  io::write_text_file((fs::path(args.out_dir) / "mask.json").string(),
                      mri::mask_to_json(model.mask) + "\n");
  write_effective_config(cfg, args.out_dir);

  std::cout << "dataset: " << cfg.dataset.train << "/" << cfg.dataset.val << "/"
            << cfg.dataset.test << " train/val/test, " << cfg.dataset.height << "x"
            << cfg.dataset.width << ", " << cfg.dataset.n_coils << " coils\n";
  std::cout << "mask: " << model.mask.kept_rows.size() << "/" << model.mask.height
            << " rows kept, acceleration " << cfg.acquisition.acceleration
            << ", sampling rate " << io::format_double(model.mask.sampling_rate() * 100.0)
            << "%\n";
  std::cout << "wrote " << args.out_dir << "\n";
  return 0;
}

int run_training_command(const CommonArgs& args, train::Objective objective,
                         const std::string& init_path, const std::string& frozen_path,
                         const std::string& resume_path, std::optional<int> epochs_override) {
  RunConfig cfg = resolve_config(args);
  if (epochs_override) cfg.train.epochs = *epochs_override;
  cfg.validate();
  if (objective == train::Objective::finetune &&
      cfg.recon.mode != recon::Mode::smug && cfg.recon.mode != recon::Mode::smugv0)
    throw std::invalid_argument("finetune requires an RS-applied mode (smug|smugv0), got '" +
                                recon::mode_name(cfg.recon.mode) + "'");
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  data::Dataset train_set = load_split(args.data_dir, "train");
  data::Dataset val_set = load_split(args.data_dir, "val");

  DenoiserParams init = init_denoiser(cfg.denoiser, cfg.denoiser_init_seed);
  std::optional<train::ResumeState> resume;
  if (!resume_path.empty()) {
    train::Checkpoint ck = load_checkpoint_arg(resume_path, "resume");
    check_denoiser_compatible(ck, cfg.denoiser);
    init = ck.params;
    resume = train::ResumeState{ck.opt, ck.best_params, ck.best_val_psnr, ck.epochs_done};
  } else if (!init_path.empty()) {
    train::Checkpoint ck = load_checkpoint_arg(init_path, "init");
    check_denoiser_compatible(ck, cfg.denoiser);
    init = ck.params;
  }

  std::optional<DenoiserParams> frozen;
  if (!frozen_path.empty()) {
    train::Checkpoint ck = load_checkpoint_arg(frozen_path, "frozen");
    check_denoiser_compatible(ck, cfg.denoiser);
    frozen = ck.params;
  }
  const bool needs_frozen =
      objective == train::Objective::finetune &&
      (cfg.train.ustab_reference == train::UStabReference::frozen_denoised_target ||
       cfg.train.ustab_reference == train::UStabReference::frozen_denoised_step);
  if (needs_frozen && !frozen)
    throw std::invalid_argument("ustab_reference '" +
                                train::ustab_reference_name(cfg.train.ustab_reference) +
                                "' requires --frozen CHECKPOINT");

  train::TrainResult res =
      train::run_training(objective, train_set, val_set, init, cfg.recon, cfg.train,
                          frozen ? &*frozen : nullptr, threads,
                          resume ? &*resume : nullptr);

  train::Checkpoint out;
  out.params = res.params;
  out.best_params = res.best_params;
  out.opt = res.opt;
  out.epochs_done = cfg.train.epochs;
  out.best_val_psnr = res.best_val_psnr;
  out.trained_mode = objective == train::Objective::pretrain ? "pretrain"
                     : objective == train::Objective::vanilla_mse
                         ? "vanilla"
                         : recon::mode_name(cfg.recon.mode);
  out.meta_json = effective_config_json(cfg);
  train::save_checkpoint((fs::path(args.out_dir) / "checkpoint.smck").string(), out);
  io::write_text_file((fs::path(args.out_dir) / "log.csv").string(),
                      train::training_log_csv(res.log));
  write_effective_config(cfg, args.out_dir);

  std::cout << "trained " << out.trained_mode << " for " << res.log.size() << " epochs";
  if (!res.log.empty())
    std::cout << ", final train loss " << io::format_double(res.log.back().train_loss)
              << ", best val PSNR " << io::format_double(res.best_val_psnr) << " dB";
  std::cout << "\nwrote " << args.out_dir << "\n";
  return 0;
}

int cmd_reconstruct(const CommonArgs& args, const std::string& checkpoint_path) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  train::Checkpoint ck = load_checkpoint_arg(checkpoint_path, "checkpoint");
  check_denoiser_compatible(ck, cfg.denoiser);
  recon::ReconConfig rc = eval_recon_config(cfg);
  check_mode_compatible(ck, rc);

  data::Dataset test = load_split(args.data_dir, "test");
  const int n = test.count();
  std::vector<ad::Tensor> images(static_cast<size_t>(n));
  std::vector<recon::ReconReport> reports(static_cast<size_t>(n));
  std::vector<double> psnrs(static_cast<size_t>(n)), ssims(static_cast<size_t>(n));
  std::vector<bool> psnr_inf(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    const data::Sample& s = test.samples[static_cast<size_t>(i)];
    auto [x, report] = recon::reconstruct(rc, ck.params, test.model, s.kspace);
    const double range = data_range_of(s.target);
    const PsnrValue p = psnr(x, s.target, range);
    psnrs[static_cast<size_t>(i)] = p.db;
    psnr_inf[static_cast<size_t>(i)] = p.is_infinite;
    ssims[static_cast<size_t>(i)] = ssim(x, s.target, range);
    images[static_cast<size_t>(i)] = std::move(x);
    reports[static_cast<size_t>(i)] = std::move(report);
  });

  std::string csv = "image,psnr_db,ssim\n";
  json traces = json::array();
  for (int i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "recon_%03d", i);
    write_image_blob((fs::path(args.out_dir) / (std::string(name) + ".cimg")).string(),
                     images[static_cast<size_t>(i)], i, "reconstruction");
    const ad::Tensor mag = magnitude_image(images[static_cast<size_t>(i)]);
    io::write_pgm((fs::path(args.out_dir) / (std::string(name) + ".pgm")).string(), mag.data,
                  mag.shape[0], mag.shape[1],
                  data_range_of(test.samples[static_cast<size_t>(i)].target));
    csv += std::to_string(i) + "," +
           metric_csv_value({psnrs[static_cast<size_t>(i)], psnr_inf[static_cast<size_t>(i)]}) +
           "," + io::format_double(ssims[static_cast<size_t>(i)]) + "\n";
    traces.push_back(json::parse(reports[static_cast<size_t>(i)].to_json()));
  }
  const Aggregate ap = aggregate_metric(psnrs), as = aggregate_metric(ssims);
  csv += "mean," + io::format_double(ap.mean) + "," + io::format_double(as.mean) + "\n";
  csv += "std," + io::format_double(ap.stddev) + "," + io::format_double(as.stddev) + "\n";
  io::write_text_file((fs::path(args.out_dir) / "metrics.csv").string(), csv);
  io::write_text_file((fs::path(args.out_dir) / "traces.json").string(), traces.dump(2) + "\n");
  write_effective_config(cfg, args.out_dir);

  std::cout << "reconstructed " << n << " images (" << recon::mode_name(rc.mode)
            << "), mean PSNR " << io::format_double(ap.mean) << " dB, mean SSIM "
            << io::format_double(as.mean) << "\nwrote " << args.out_dir << "\n";
  return 0;
}

int cmd_attack(const CommonArgs& args, const std::string& checkpoint_path) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  train::Checkpoint ck = load_checkpoint_arg(checkpoint_path, "checkpoint");
  check_denoiser_compatible(ck, cfg.denoiser);
  recon::ReconConfig rc = eval_recon_config(cfg);
  check_mode_compatible(ck, rc);

  data::Dataset test = load_split(args.data_dir, "test");
  const int n = test.count();
  std::vector<ad::Tensor> deltas(static_cast<size_t>(n));
  std::vector<double> clean_psnr(static_cast<size_t>(n)), adv_psnr(static_cast<size_t>(n));
  std::vector<double> clean_ssim(static_cast<size_t>(n)), adv_ssim(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    const data::Sample& s = test.samples[static_cast<size_t>(i)];
    const double range = data_range_of(s.target);
    const ad::Tensor u0 = mri::adjoint(test.model, s.kspace);
    recon::ReconConfig attack_rc = rc;
    if (cfg.attack.attack_base_model) attack_rc.sigma = 0.0;
    AttackConfig atk = cfg.attack;
    atk.seed = mix_seed(cfg.attack.seed, static_cast<uint64_t>(i));
    AttackResult res =
        pgd_attack_image(make_recon_builder(attack_rc, ck.params, test.model), u0, s.target, atk);
    ad::Tensor u_adv = u0;
    u_adv.add_(res.delta);
    const ad::Tensor clean = recon::reconstruct_image(rc, ck.params, test.model, u0).first;
    const ad::Tensor adv = recon::reconstruct_image(rc, ck.params, test.model, u_adv).first;
    clean_psnr[static_cast<size_t>(i)] = psnr(clean, s.target, range).db;
    adv_psnr[static_cast<size_t>(i)] = psnr(adv, s.target, range).db;
    clean_ssim[static_cast<size_t>(i)] = ssim(clean, s.target, range);
    adv_ssim[static_cast<size_t>(i)] = ssim(adv, s.target, range);
    deltas[static_cast<size_t>(i)] = std::move(res.delta);
  });

  std::string csv = "image,clean_psnr_db,attacked_psnr_db,clean_ssim,attacked_ssim\n";
  for (int i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "delta_%03d.cimg", i);
    write_image_blob((fs::path(args.out_dir) / name).string(), deltas[static_cast<size_t>(i)],
                     i, "perturbation");
    csv += std::to_string(i) + "," + io::format_double(clean_psnr[static_cast<size_t>(i)]) +
           "," + io::format_double(adv_psnr[static_cast<size_t>(i)]) + "," +
           io::format_double(clean_ssim[static_cast<size_t>(i)]) + "," +
           io::format_double(adv_ssim[static_cast<size_t>(i)]) + "\n";
  }
  io::write_text_file((fs::path(args.out_dir) / "metrics.csv").string(), csv);
  const Aggregate cp = aggregate_metric(clean_psnr), apv = aggregate_metric(adv_psnr);
  json summary;
  summary["epsilon"] = cfg.attack.epsilon;
  summary["steps"] = cfg.attack.steps;
  summary["clean_psnr_mean"] = cp.mean;
  summary["attacked_psnr_mean"] = apv.mean;
  summary["psnr_drop_db"] = cp.mean - apv.mean;
  io::write_text_file((fs::path(args.out_dir) / "attack.json").string(),
                      summary.dump(2) + "\n");
  write_effective_config(cfg, args.out_dir);

  std::cout << "attacked " << n << " images at epsilon "
            << io::format_double(cfg.attack.epsilon) << ": PSNR "
            << io::format_double(cp.mean) << " -> " << io::format_double(apv.mean)
            << " dB\nwrote " << args.out_dir << "\n";
  return 0;
}

std::vector<ModelSpec> models_from_config(const RunConfig& cfg,
                                          const std::string& config_dir) {
  if (cfg.sweep.models.empty())
    throw std::invalid_argument("sweep: config lists no models (sweep.models)");
  std::vector<ModelSpec> specs;
  for (const auto& m : cfg.sweep.models) {
    fs::path ck_path(m.checkpoint);
    if (ck_path.is_relative() && !config_dir.empty() && !fs::exists(ck_path))
      ck_path = fs::path(config_dir) / ck_path;
    if (!fs::exists(ck_path))
      throw std::invalid_argument("sweep: checkpoint not found for model '" + m.name +
                                  "': " + m.checkpoint);
    train::Checkpoint ck = train::load_checkpoint(ck_path.string());
    check_denoiser_compatible(ck, cfg.denoiser);
    recon::ReconConfig rc = eval_recon_config(cfg);
    if (!m.mode.empty())
      rc.mode = recon::mode_from_name(m.mode);
    else if (ck.trained_mode == "vanilla")
      rc.mode = recon::Mode::vanilla;
    else if (!ck.trained_mode.empty() && ck.trained_mode != "init" &&
             ck.trained_mode != "pretrain")
      rc.mode = recon::mode_from_name(ck.trained_mode);
    if (m.sigma >= 0.0) rc.sigma = m.sigma;
    if (m.mc_samples > 0) rc.mc_samples = m.mc_samples;
    if (rc.mode == recon::Mode::vanilla) rc.sigma = 0.0;
    check_mode_compatible(ck, rc);
    specs.push_back(ModelSpec{m.name, ck.params, rc});
  }
  return specs;
}

SweepSettings sweep_settings_from_config(const RunConfig& cfg, int threads) {
  SweepSettings settings;
  settings.attack = cfg.attack;
  settings.noise_sigma = cfg.sweep.noise_sigma >= 0.0 ? cfg.sweep.noise_sigma : cfg.recon.sigma;
  settings.eval_seed = cfg.sweep.eval_seed;
  settings.threads = threads;
  return settings;
}

json sweep_sidecar(const RunConfig& cfg, const CommonArgs& args,
                   const std::vector<ModelSpec>& specs, const char* kind) {
  json side;
  side["kind"] = kind;
  side["dataset_path"] = split_path(args.data_dir, "test");
  side["dataset_hash"] = io::file_hash(split_path(args.data_dir, "test"));
  side["robust_epsilon"] = cfg.attack.epsilon;
  side["noise_sigma"] = cfg.sweep.noise_sigma >= 0.0 ? cfg.sweep.noise_sigma : cfg.recon.sigma;
  side["eval_seed"] = cfg.sweep.eval_seed;
  json models = json::array();
  for (const auto& s : specs)
    models.push_back({{"name", s.name},
                      {"mode", recon::mode_name(s.recon.mode)},
                      {"sigma", s.recon.sigma},
                      {"mc_samples", s.recon.mc_samples}});
  side["models"] = models;
  return side;
}

int cmd_sweep(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  const std::string config_dir =
      args.config_path.empty() ? "" : fs::path(args.config_path).parent_path().string();
  std::vector<ModelSpec> specs = models_from_config(cfg, config_dir);
  SweepSettings settings = sweep_settings_from_config(cfg, threads);
  const SweepAxis axis = sweep_axis_from_name(cfg.sweep.axis);

  auto rows = run_sweep(axis, cfg.sweep.values, specs, load_split(args.data_dir, "test"),
                        settings);
  io::write_text_file((fs::path(args.out_dir) / "sweep.csv").string(), sweep_csv(rows));
  json side = sweep_sidecar(cfg, args, specs, "sweep");
  side["axis"] = cfg.sweep.axis;
  side["values"] = cfg.sweep.values;
  io::write_text_file((fs::path(args.out_dir) / "sweep.json").string(), side.dump(2) + "\n");
  write_effective_config(cfg, args.out_dir);
  std::cout << "swept " << cfg.sweep.axis << " over " << cfg.sweep.values.size()
            << " values x " << specs.size() << " models\nwrote " << args.out_dir << "\n";
  return 0;
}

int cmd_ablation(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  ensure_out_dir(args.out_dir);
  const int threads = resolve_threads(args.threads);

  if (cfg.ablation.variants.size() != 5)
    throw std::invalid_argument("ablation: config must list all 5 UStab reference variants, got " +
                                std::to_string(cfg.ablation.variants.size()));
  const std::string config_dir =
      args.config_path.empty() ? "" : fs::path(args.config_path).parent_path().string();
  std::vector<ModelSpec> specs;
  for (const auto& [name, path] : cfg.ablation.variants) {
    (void)train::ustab_reference_from_name(name);  // names must be the variant identifiers
    fs::path ck_path(path);
    if (ck_path.is_relative() && !config_dir.empty() && !fs::exists(ck_path))
      ck_path = fs::path(config_dir) / ck_path;
    if (!fs::exists(ck_path))
      throw std::invalid_argument("ablation: checkpoint not found for variant '" + name +
                                  "': " + path);
    train::Checkpoint ck = train::load_checkpoint(ck_path.string());
    check_denoiser_compatible(ck, cfg.denoiser);
    recon::ReconConfig rc = eval_recon_config(cfg);
    check_mode_compatible(ck, rc);
    specs.push_back(ModelSpec{name, ck.params, rc});
  }

  SweepSettings settings = sweep_settings_from_config(cfg, threads);
  auto rows = run_reference_ablation(specs, cfg.ablation.values,
                                     load_split(args.data_dir, "test"), settings);
  io::write_text_file((fs::path(args.out_dir) / "ablation.csv").string(), sweep_csv(rows));
  json side = sweep_sidecar(cfg, args, specs, "ablation");
  side["values"] = cfg.ablation.values;
  io::write_text_file((fs::path(args.out_dir) / "ablation.json").string(),
                      side.dump(2) + "\n");
  write_effective_config(cfg, args.out_dir);
  std::cout << "ablation over 5 UStab variants x " << cfg.ablation.values.size()
            << " epsilon values\nwrote " << args.out_dir << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  if (inputs.empty()) throw std::invalid_argument("report: no input directories given");
  ensure_out_dir(out_dir);

  std::vector<SweepRow> rows;
  std::string dataset_hash;
  double robust_epsilon = 0.0;
  json provenance = json::array();
  for (const std::string& dir : inputs) {
    std::string csv_path, side_path;
    for (const char* base : {"sweep", "ablation"}) {
      const std::string c = (fs::path(dir) / (std::string(base) + ".csv")).string();
      if (fs::exists(c)) {
        csv_path = c;
        side_path = (fs::path(dir) / (std::string(base) + ".json")).string();
      }
    }
    if (csv_path.empty())
      throw std::invalid_argument("report: no sweep.csv or ablation.csv under " + dir);
    json side = json::parse(io::read_text_file(side_path));
    const std::string hash = side.at("dataset_hash").get<std::string>();
    if (dataset_hash.empty()) {
      dataset_hash = hash;
      robust_epsilon = side.at("robust_epsilon").get<double>();
    } else if (hash != dataset_hash) {
      throw std::invalid_argument("report: dataset hash mismatch between inputs (" + dir +
                                  " evaluated a different dataset); refusing to merge");
    }
    for (auto& r : sweep_rows_from_csv(io::read_text_file(csv_path))) rows.push_back(r);
    provenance.push_back({{"dir", dir}, {"dataset_hash", hash}});
  }

  io::write_text_file((fs::path(out_dir) / "report.csv").string(),
                      build_report_csv(rows, robust_epsilon));
  json meta;
  meta["inputs"] = provenance;
  meta["dataset_hash"] = dataset_hash;
  meta["robust_epsilon"] = robust_epsilon;
  io::write_text_file((fs::path(out_dir) / "report.json").string(), meta.dump(2) + "\n");
  std::cout << "merged " << inputs.size() << " run(s) into " << out_dir << "/report.csv\n";
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_data) {
  cmd->add_option("--config", args.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  if (with_data) cmd->add_option("--data", args.data_dir, "dataset directory")->required();
  cmd->add_option("--threads", args.threads,
                  "worker threads (0: SMUG_THREADS env or hardware)");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_option("--seed", args.seed, "override every section seed from one value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smoothed unrolled MRI reconstruction pipeline"};
  app.require_subcommand(1);

  CommonArgs gen_args, pre_args, van_args, fin_args, rec_args, atk_args, swp_args, abl_args;
  std::optional<int> gen_accel;
  std::optional<int> pre_epochs, van_epochs, fin_epochs;
  std::string van_init, fin_init, fin_frozen, pre_resume, rec_ck, atk_ck;
  std::vector<std::string> report_inputs;
  std::string report_out;

  CLI::App* gen = app.add_subcommand("generate-data", "write synthetic train/val/test datasets");
  add_common(gen, gen_args, false);
  gen->add_option("--acceleration", gen_accel, "override the Cartesian acceleration factor");

  CLI::App* pre = app.add_subcommand("pretrain", "denoiser pre-training on noisy targets");
  add_common(pre, pre_args, true);
  pre->add_option("--resume", pre_resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  pre->add_option("--epochs", pre_epochs, "override train.epochs");

  CLI::App* van = app.add_subcommand("train-vanilla",
                                     "train the unsmoothed baseline with reconstruction MSE");
  add_common(van, van_args, true);
  van->add_option("--init", van_init, "initialize from a checkpoint");
  van->add_option("--epochs", van_epochs, "override train.epochs");

  CLI::App* fin = app.add_subcommand("finetune", "stability fine-tuning of an RS-applied mode");
  add_common(fin, fin_args, true);
  fin->add_option("--init", fin_init, "pre-trained checkpoint (theta_pre)")->required();
  fin->add_option("--frozen", fin_frozen, "frozen denoiser snapshot for frozen-* references");
  fin->add_option("--epochs", fin_epochs, "override train.epochs");

  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct the test split");
  add_common(rec, rec_args, true);
  rec->add_option("--checkpoint", rec_ck, "trained checkpoint")->required();

  CLI::App* atk = app.add_subcommand("attack", "PGD-attack the test split");
  add_common(atk, atk_args, true);
  atk->add_option("--checkpoint", atk_ck, "trained checkpoint")->required();

  CLI::App* swp = app.add_subcommand("sweep", "robustness sweep over an axis");
  add_common(swp, swp_args, true);

  CLI::App* abl = app.add_subcommand("ablation", "UStab reference ablation (5 variants)");
  add_common(abl, abl_args, true);

  CLI::App* rep = app.add_subcommand("report", "merge sweep outputs into a comparison table");
  rep->add_option("inputs", report_inputs, "sweep/ablation output directories")->required();
  rep->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(gen_args, gen_accel);
    if (pre->parsed())
      return run_training_command(pre_args, train::Objective::pretrain, "", "", pre_resume,
                                  pre_epochs);
    if (van->parsed())
      return run_training_command(van_args, train::Objective::vanilla_mse, van_init, "", "",
                                  van_epochs);
    if (fin->parsed())
      return run_training_command(fin_args, train::Objective::finetune, fin_init, fin_frozen,
                                  "", fin_epochs);
    if (rec->parsed()) return cmd_reconstruct(rec_args, rec_ck);
    if (atk->parsed()) return cmd_attack(atk_args, atk_ck);
    if (swp->parsed()) return cmd_sweep(swp_args);
    if (abl->parsed()) return cmd_ablation(abl_args);
    if (rep->parsed()) return cmd_report(report_inputs, report_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
