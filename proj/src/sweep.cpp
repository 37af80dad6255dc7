#include "smug/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "smug/io.hpp"
#include "smug/parallel.hpp"
#include "smug/rng.hpp"

namespace smug {

std::string sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::epsilon: return "epsilon";
    case SweepAxis::sampling_rate: return "sampling_rate";
    case SweepAxis::unroll_steps: return "unroll_steps";
  }
  throw std::logic_error("sweep_axis_name: bad axis");
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "epsilon") return SweepAxis::epsilon;
  if (name == "sampling_rate") return SweepAxis::sampling_rate;
  if (name == "unroll_steps") return SweepAxis::unroll_steps;
  throw std::invalid_argument("unknown sweep axis '" + name +
                              "' (want epsilon|sampling_rate|unroll_steps)");
}

namespace {

struct PerImage {
  std::vector<double> psnr, ssim;
};

SweepRow make_row(const std::string& model, const std::string& axis, double value,
                  PerImage scores) {
  SweepRow row;
  row.model = model;
  row.axis = axis;
  row.value = value;
  row.psnr = aggregate_metric(scores.psnr);
  row.ssim = aggregate_metric(scores.ssim);
  row.psnr_values = std::move(scores.psnr);
  row.ssim_values = std::move(scores.ssim);
  return row;
}

// evaluates a reconstruction of every test image in parallel slots
template <typename ReconOne>
PerImage eval_images(const data::Dataset& test, int threads, ReconOne&& recon_one) {
  const int n = test.count();
  PerImage out;
  out.psnr.resize(static_cast<size_t>(n));
  out.ssim.resize(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    const data::Sample& s = test.samples[static_cast<size_t>(i)];
    const ad::Tensor x = recon_one(i, s);
    const double range = data_range_of(s.target);
    out.psnr[static_cast<size_t>(i)] = psnr(x, s.target, range).db;
    out.ssim[static_cast<size_t>(i)] = ssim(x, s.target, range);
  });
  return out;
}

PerImage eval_epsilon(const ModelSpec& m, const data::Dataset& test,
                      const SweepSettings& settings, double epsilon) {
  return eval_images(test, settings.threads, [&](int i, const data::Sample& s) {
    const ad::Tensor u0 = mri::adjoint(test.model, s.kspace);
    if (epsilon == 0.0) return recon::reconstruct_image(m.recon, m.params, test.model, u0).first;
    AttackConfig atk = settings.attack;
    atk.epsilon = epsilon;
    atk.seed = mix_seed(settings.attack.seed, static_cast<uint64_t>(i));
    recon::ReconConfig attack_cfg = m.recon;
    if (atk.attack_base_model) attack_cfg.sigma = 0.0;  // gradients through the base pipeline
    ReconBuilder builder = make_recon_builder(attack_cfg, m.params, test.model);
    AttackResult res = pgd_attack_image(builder, u0, s.target, atk);
    ad::Tensor u_adv = u0;
    u_adv.add_(res.delta);
    return recon::reconstruct_image(m.recon, m.params, test.model, u_adv).first;
  });
}

PerImage eval_noise(const ModelSpec& m, const data::Dataset& test,
                    const SweepSettings& settings) {
  return eval_images(test, settings.threads, [&](int i, const data::Sample& s) {
    ad::Tensor u = mri::adjoint(test.model, s.kspace);
    if (settings.noise_sigma > 0.0) {
      const recon::NoisePlan plan{mix_seed(settings.eval_seed, 0x6e6f6973ULL,
                                           static_cast<uint64_t>(i)),
                                  settings.noise_sigma, test.height, test.width};
      u.add_(plan.sample(0, 0));
    }
    return recon::reconstruct_image(m.recon, m.params, test.model, u).first;
  });
}

PerImage eval_sampling_rate(const ModelSpec& m, const data::Dataset& test,
                            const SweepSettings& settings, double rate) {
  if (rate <= 0.0 || rate > 1.0)
    throw std::invalid_argument("sweep: sampling rate must lie in (0, 1]");
  const int accel = std::max(1, static_cast<int>(std::llround(1.0 / rate)));
  mri::SamplingMask mask = mri::build_cartesian_mask(
      test.height, test.width, accel, test.model.mask.acs_rows, test.model.mask.seed);
  const mri::AcquisitionModel swept = mri::make_model(std::move(mask), test.model.sens);
  return eval_images(test, settings.threads, [&](int, const data::Sample& s) {
    const ad::Tensor y = data::simulate_measurement(swept, s.target, test.noise_std,
                                                    s.noise_seed);
    return recon::reconstruct(m.recon, m.params, swept, y).first;
  });
}

PerImage eval_unroll(const ModelSpec& m, const data::Dataset& test,
                     const SweepSettings& settings, double steps) {
  recon::ReconConfig cfg = m.recon;
  cfg.unroll_steps = static_cast<int>(std::llround(steps));
  return eval_images(test, settings.threads, [&](int, const data::Sample& s) {
    return recon::reconstruct(cfg, m.params, test.model, s.kspace).first;
  });
}

}  // namespace

std::vector<SweepRow> run_sweep(SweepAxis axis, std::span<const double> values,
                                std::span<const ModelSpec> models, const data::Dataset& test,
                                const SweepSettings& settings) {
  if (!std::is_sorted(values.begin(), values.end()))
    throw std::invalid_argument("run_sweep: axis values must be sorted ascending");
  if (models.empty()) throw std::invalid_argument("run_sweep: no models given");
  if (test.count() == 0) throw std::invalid_argument("run_sweep: empty test split");

  std::vector<SweepRow> rows;
  const std::string axis_str = sweep_axis_name(axis);
  for (const ModelSpec& m : models) {
    for (double v : values) {
      PerImage scores;
      switch (axis) {
        case SweepAxis::epsilon: scores = eval_epsilon(m, test, settings, v); break;
        case SweepAxis::sampling_rate: scores = eval_sampling_rate(m, test, settings, v); break;
        case SweepAxis::unroll_steps: scores = eval_unroll(m, test, settings, v); break;
      }
      rows.push_back(make_row(m.name, axis_str, v, std::move(scores)));
    }
    if (axis == SweepAxis::epsilon)
      rows.push_back(make_row(m.name, "noise", settings.noise_sigma,
                              eval_noise(m, test, settings)));
  }
  return rows;
}

std::vector<SweepRow> run_reference_ablation(std::span<const ModelSpec> variants,
                                             std::span<const double> eps_values,
                                             const data::Dataset& test,
                                             const SweepSettings& settings) {
  if (variants.size() != 5)
    throw std::invalid_argument("run_reference_ablation: expected 5 variants, got " +
                                std::to_string(variants.size()));
  std::vector<SweepRow> rows = run_sweep(SweepAxis::epsilon, eps_values, variants, test, settings);
  // the ablation table is exactly variants x epsilon values
  std::erase_if(rows, [](const SweepRow& r) { return r.axis == "noise"; });
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "model,axis,value,psnr_mean,psnr_std,ssim_mean,ssim_std,n_images\n";
  for (const SweepRow& r : rows) {
    out += r.model + "," + r.axis + "," + io::format_double(r.value) + "," +
           io::format_double(r.psnr.mean) + "," + io::format_double(r.psnr.stddev) + "," +
           io::format_double(r.ssim.mean) + "," + io::format_double(r.ssim.stddev) + "," +
           std::to_string(r.psnr.n) + "\n";
  }
  return out;
}

std::vector<SweepRow> sweep_rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "model,axis,value,psnr_mean,psnr_std,ssim_mean,ssim_std,n_images")
    throw std::runtime_error("sweep_rows_from_csv: unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw std::runtime_error("sweep_rows_from_csv: bad row '" + line + "'");
    SweepRow r;
    r.model = fields[0];
    r.axis = fields[1];
    r.value = std::strtod(fields[2].c_str(), nullptr);
    r.psnr.mean = std::strtod(fields[3].c_str(), nullptr);
    r.psnr.stddev = std::strtod(fields[4].c_str(), nullptr);
    r.ssim.mean = std::strtod(fields[5].c_str(), nullptr);
    r.ssim.stddev = std::strtod(fields[6].c_str(), nullptr);
    r.psnr.n = r.ssim.n = std::atoi(fields[7].c_str());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string build_report_csv(std::span<const SweepRow> rows, double robust_epsilon) {
  struct Entry {
    const SweepRow* clean = nullptr;
    const SweepRow* noise = nullptr;
    const SweepRow* robust = nullptr;
  };
  std::vector<std::string> order;
  std::map<std::string, Entry> table;
  for (const SweepRow& r : rows) {
    if (!table.count(r.model)) order.push_back(r.model);
    Entry& e = table[r.model];
    if (r.axis == "epsilon" && r.value == 0.0) e.clean = &r;
    if (r.axis == "noise") e.noise = &r;
    if (r.axis == "epsilon" && r.value == robust_epsilon && r.value > 0.0) e.robust = &r;
  }
  // fall back to the largest attacked epsilon when the requested one is absent
  for (auto& [name, e] : table) {
    if (e.robust) continue;
    for (const SweepRow& r : rows)
      if (r.model == name && r.axis == "epsilon" && r.value > 0.0 &&
          (!e.robust || r.value > e.robust->value))
        e.robust = &r;
  }
  const std::string baseline =
      std::find(order.begin(), order.end(), "vanilla") != order.end() ? "vanilla" : order.at(0);
  const Entry& base = table.at(baseline);

  auto cell = [](const SweepRow* r, bool want_psnr, bool want_std) {
    if (!r) return std::string("nan");
    const Aggregate& a = want_psnr ? r->psnr : r->ssim;
    return io::format_double(want_std ? a.stddev : a.mean);
  };
  auto delta = [](const SweepRow* r, const SweepRow* b, bool want_psnr) {
    if (!r || !b) return std::string("nan");
    const double dv = (want_psnr ? r->psnr.mean : r->ssim.mean) -
                      (want_psnr ? b->psnr.mean : b->ssim.mean);
    return io::format_double(dv);
  };

  std::string out =
      "model,clean_psnr_mean,clean_psnr_std,clean_ssim_mean,clean_ssim_std,"
      "noise_psnr_mean,noise_psnr_std,noise_ssim_mean,noise_ssim_std,"
      "robust_psnr_mean,robust_psnr_std,robust_ssim_mean,robust_ssim_std,"
      "delta_clean_psnr,delta_noise_psnr,delta_robust_psnr,"
      "delta_clean_ssim,delta_noise_ssim,delta_robust_ssim\n";
  for (const std::string& name : order) {
    const Entry& e = table.at(name);
    out += name;
    for (const SweepRow* r : {e.clean, e.noise, e.robust}) {
      out += "," + cell(r, true, false) + "," + cell(r, true, true) + "," +
             cell(r, false, false) + "," + cell(r, false, true);
    }
    out += "," + delta(e.clean, base.clean, true) + "," + delta(e.noise, base.noise, true) +
           "," + delta(e.robust, base.robust, true);
    out += "," + delta(e.clean, base.clean, false) + "," + delta(e.noise, base.noise, false) +
           "," + delta(e.robust, base.robust, false);
    out += "\n";
  }
  return out;
}

}  // namespace smug
