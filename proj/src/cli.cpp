#include "act/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "act/errors.hpp"
#include "act/plot.hpp"
#include "act/rng.hpp"
#include "act/sampler.hpp"
#include "act/stats.hpp"
#include "act/trainer.hpp"

namespace act {

namespace fs = std::filesystem;
using torch::Tensor;

namespace {

std::string unique_path(const std::string& dir, const std::string& stem, const std::string& ext) {
  fs::create_directories(dir);
  fs::path p = fs::path(dir) / (stem + ext);
  for (int i = 1; fs::exists(p); ++i) p = fs::path(dir) / (stem + ".r" + std::to_string(i) + ext);
  return p.string();
}

std::string quote(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return "\"" + s + "\"";
}

TimestepGrid final_grid(const RunConfig& cfg) {
  ScheduleConfig s = cfg.sched;
  s.K = cfg.training_iterations;
  return build_grid(step_count(s.K, s), s);
}

struct Loaded {
  RunConfig cfg;
  DatasetPtr data;
  std::unique_ptr<Trainer> trainer;
};

Loaded load_checkpoint(const std::string& path) {
  Loaded l;
  l.cfg = Trainer::read_config(path);
  l.data = make_dataset(l.cfg.data);
  l.trainer = std::make_unique<Trainer>(l.cfg, l.data);
  l.trainer->load(path);
  return l;
}

void write_points_csv(const std::string& path, const Tensor& pts) {
  std::ofstream out(path);
  auto p = pts.detach().contiguous();
  out << "x,y\n";
  auto acc = p.accessor<double, 2>();
  char buf[96];
  for (std::int64_t i = 0; i < p.size(0); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", acc[i][0], acc[i][1]);
    out << buf;
  }
}

std::pair<std::vector<double>, std::vector<double>> columns(const Tensor& pts) {
  auto p = pts.detach().contiguous();
  auto x = p.select(1, 0).contiguous(), y = p.select(1, 1).contiguous();
  return {std::vector<double>(x.data_ptr<double>(), x.data_ptr<double>() + x.numel()),
          std::vector<double>(y.data_ptr<double>(), y.data_ptr<double>() + y.numel())};
}

Tensor features_of(const Tensor& x, bool image) { return image ? desk_features(x) : x.flatten(1); }

double desk_fid(Trainer& tr, std::int64_t count, std::uint64_t seed, ParamSet params) {
  Sampler s(&tr.model(), final_grid(tr.config()), tr.data().is_image(), params);
  auto x = s.sample_one_step(count, seed);
  auto gen = make_stream(seed, Stream::Eval);
  auto ref = next_batch(tr.data(), count, gen);
  return frechet_score(features_of(x, tr.data().is_image()), features_of(ref, tr.data().is_image())).score;
}

// metrics.csv -> column name -> values
std::map<std::string, std::vector<double>> read_metrics(const std::string& path) {
  std::map<std::string, std::vector<double>> cols;
  std::ifstream in(path);
  if (!in) return cols;
  std::string line;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.empty()) continue;
    if (cells[0] == "k") {
      names = cells;
      continue;
    }
    for (std::size_t i = 0; i < cells.size() && i < names.size(); ++i) cols[names[i]].push_back(std::stod(cells[i]));
  }
  return cols;
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_train(const std::string& config_path, std::ostream& out) {
  auto cfg = RunConfig::load(config_path);
  auto data = make_dataset(cfg.data);
  Trainer tr(cfg, data);
  fs::create_directories(cfg.output_dir);
  const auto metrics = fs::path(cfg.output_dir) / "metrics.csv";
  if (fs::exists(metrics)) fs::rename(metrics, unique_path(cfg.output_dir, "metrics.previous", ".csv"));
  cfg.save((fs::path(cfg.output_dir) / "config.txt").string());
  auto res = run_training(tr, cfg.training_iterations);
  out << "ok command=train steps=" << tr.k() << " checkpoint=" << res.last_checkpoint << '\n';
  return kExitOk;
}

int cmd_resume(const std::string& ckpt, std::int64_t steps, std::ostream& out) {
  auto l = load_checkpoint(ckpt);
  auto& tr = *l.trainer;
  if (steps < 0) steps = std::max<std::int64_t>(0, l.cfg.training_iterations - tr.k());
  auto res = run_training(tr, steps);
  out << "ok command=resume steps=" << tr.k() << " checkpoint=" << res.last_checkpoint << '\n';
  return kExitOk;
}

int cmd_sample(const std::string& ckpt, std::int64_t count, std::uint64_t seed, std::int64_t steps, ParamSet params,
               std::ostream& out) {
  auto l = load_checkpoint(ckpt);
  Sampler s(&l.trainer->model(), final_grid(l.cfg), l.data->is_image(), params);
  auto x = s.sample_multistep(count, steps, seed);
  const auto stem = "samples_k" + std::to_string(l.trainer->k()) + "_seed" + std::to_string(seed) + "_steps" +
                    std::to_string(steps);
  std::string path;
  if (l.data->is_image()) {
    path = unique_path(l.cfg.output_dir, stem, ".png");
    write_image_grid(path, x, static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(count)))));
  } else {
    path = unique_path(l.cfg.output_dir, stem, ".csv");
    write_points_csv(path, x);
    auto [xs, ys] = columns(x);
    std::vector<double> cx, cy;
    if (auto modes = l.data->modes()) std::tie(cx, cy) = columns(*modes);
    write_scatter_plot(unique_path(l.cfg.output_dir, stem, ".svg"), "one-step samples", xs, ys, cx, cy);
  }
  out << "ok command=sample count=" << count << " clamped=" << s.last_clamped() << " path=" << path << '\n';
  return kExitOk;
}

int cmd_inpaint(const std::string& ckpt, const std::string& ref_path, const std::string& mask_path,
                std::int64_t refine_steps, std::uint64_t seed, ParamSet params, std::ostream& out) {
  auto l = load_checkpoint(ckpt);
  if (!l.data->is_image()) throw UsageError("inpaint needs an image model");
  auto ref = read_image(ref_path);
  auto mask = (read_image(mask_path) > 0.0).to(torch::kFloat64);
  Sampler s(&l.trainer->model(), final_grid(l.cfg), true, params);
  auto x = s.inpaint(ref, mask, refine_steps, seed);
  const auto path = unique_path(l.cfg.output_dir, "inpaint_seed" + std::to_string(seed), ".png");
  write_image_grid(path, x.unsqueeze(0), 1);
  out << "ok command=inpaint model_calls=" << s.model_calls() << " path=" << path << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, std::int64_t count, std::uint64_t seed, std::int64_t fid_points,
             ParamSet params, std::ostream& out) {
  auto l = load_checkpoint(ckpt);
  auto& tr = *l.trainer;
  const bool image = l.data->is_image();
  Sampler s(&tr.model(), final_grid(l.cfg), image, params);
  auto x = s.sample_one_step(count, seed);
  auto gen = make_stream(seed, Stream::Eval);
  auto ref = next_batch(*l.data, count, gen);
  auto fid = frechet_score(features_of(x, image), features_of(ref, image));
  double coverage = std::nan(""), w2 = std::nan("");
  if (l.data->modes()) {
    coverage = mode_coverage(x, *l.data->modes(), 3.0 * l.cfg.data.sigma);
    if (count % 8 == 0 && count <= kAssignmentCap) w2 = score_gauss8(x, l.cfg.data.sigma, seed).w2;
  }
  const auto eval_csv = fs::path(l.cfg.output_dir) / "eval.csv";
  const bool fresh = !fs::exists(eval_csv);
  std::ofstream csv(eval_csv, std::ios::app);
  if (fresh) csv << "checkpoint,k,frechet,regularized,mode_coverage,w2\n";
  csv << fs::path(ckpt).filename().string() << ',' << tr.k() << ',' << fid.score << ',' << (fid.regularized ? 1 : 0)
      << ',' << coverage << ',' << w2 << '\n';

  // Training curves: L_CT, L_gp (penalty steps only), p_aug, desk-FID over checkpoints.
  const auto plots = (fs::path(l.cfg.output_dir) / "plots").string();
  fs::create_directories(plots);
  auto m = read_metrics((fs::path(l.cfg.output_dir) / "metrics.csv").string());
  std::vector<Series> panels;
  if (!m.empty()) {
    panels.push_back({"L_CT", m["k"], m["l_ct"]});
    Series gp{"L_gp", {}, {}};
    for (std::size_t i = 0; i < m["k"].size(); ++i) {
      if (static_cast<std::int64_t>(m["k"][i]) % l.cfg.I_gp == 0) {
        gp.x.push_back(m["k"][i]);
        gp.y.push_back(m["l_gp"][i]);
      }
    }
    panels.push_back(gp);
    panels.push_back({"p_aug", m["k"], m["p_aug"]});
  }
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(l.cfg.output_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_k", 0) == 0 && e.path().extension() == ".ckpt") ckpts.push_back(e.path());
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (fid_points > 0 && static_cast<std::int64_t>(ckpts.size()) > fid_points) {
    std::vector<fs::path> picked;
    for (std::int64_t i = 0; i < fid_points; ++i) {
      picked.push_back(ckpts[i * (ckpts.size() - 1) / std::max<std::int64_t>(1, fid_points - 1)]);
    }
    ckpts = picked;
  }
  Series fid_series{"desk-FID", {}, {}};
  for (const auto& c : ckpts) {
    Trainer t(l.cfg, l.data);
    t.load(c.string());
    fid_series.x.push_back(static_cast<double>(t.k()));
    fid_series.y.push_back(desk_fid(t, count, seed, params));
  }
  panels.push_back(fid_series);
  const auto curves = (fs::path(plots) / "training_curves.svg").string();
  write_line_plot(curves, "training curves", "step k", panels);
  if (!image) {
    auto [xs, ys] = columns(x);
    std::vector<double> cx, cy;
    if (auto modes = l.data->modes()) std::tie(cx, cy) = columns(*modes);
    write_scatter_plot((fs::path(plots) / ("samples_k" + std::to_string(tr.k()) + ".svg")).string(),
                       "one-step samples", xs, ys, cx, cy);
  }
  out << "ok command=eval k=" << tr.k() << " frechet=" << fid.score << " mode_coverage=" << coverage << " w2=" << w2
      << " plots=" << curves << '\n';
  return kExitOk;
}

int cmd_bound_check(const std::string& ckpt, std::int64_t points, const AuditOptions& opt, std::ostream& out) {
  auto l = load_checkpoint(ckpt);
  auto grid = final_grid(l.cfg);
  auto reports = audit_bound(l.trainer->model(), *l.data, grid, audit_indices(grid.size(), points), opt);
  const auto path = unique_path(l.cfg.output_dir, "bound_check_k" + std::to_string(l.trainer->k()), ".csv");
  std::ofstream csv(path);
  csv << "# empirical check of a necessary consequence of the W-distance bound; lipschitz_est is a lower bound\n";
  csv << BoundReport::csv_header() << '\n';
  bool all = true;
  for (const auto& r : reports) {
    csv << r.csv_row() << '\n';
    all = all && r.holds;
  }
  out << "ok command=bound-check rows=" << reports.size() << " all_hold=" << (all ? 1 : 0) << " path=" << path << '\n';
  return kExitOk;
}

int cmd_mode_check(const std::string& config_path, const std::vector<double>& lambdas, std::int64_t seeds,
                   std::int64_t samples, ParamSet params, std::ostream& out) {
  auto cfg = RunConfig::load(config_path);
  std::vector<std::uint64_t> seed_list;
  for (std::int64_t i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  auto res = mode_check(cfg, lambdas, seed_list, samples, params);
  const auto path = unique_path(cfg.output_dir, "mode_check", ".csv");
  std::ofstream csv(path);
  csv << "lambda,seed,coverage,w2\n";
  for (const auto& r : res.rows) csv << r.lambda << ',' << r.seed << ',' << r.coverage << ',' << r.w2 << '\n';
  out << "ok command=mode-check path=" << path;
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    out << " p(" << lambdas[0] << ">" << lambdas[i] << ")=" << res.p_values[i - 1];
  }
  out << '\n';
  return kExitOk;
}

}  // namespace

std::vector<std::int64_t> audit_indices(std::int64_t N, std::int64_t points) {
  if (N < 2 || points < 2) throw DomainError("audit_indices: need N >= 2 and points >= 2");
  std::vector<std::int64_t> idx;
  points = std::min(points, N);
  for (std::int64_t i = 0; i < points; ++i) {
    const auto k = static_cast<std::int64_t>(std::llround(static_cast<double>(i) * (N - 1) / (points - 1)));
    if (idx.empty() || idx.back() != k) idx.push_back(k);
  }
  return idx;
}

ModeCheckResult mode_check(const RunConfig& base, const std::vector<double>& lambdas,
                           const std::vector<std::uint64_t>& seeds, std::int64_t samples, ParamSet params) {
  if (base.data.kind != DatasetKind::Gauss8) throw ConfigError("dataset", "mode-check needs the gauss8 dataset");
  if (lambdas.size() < 2) throw UsageError("mode-check needs at least two lambda values");
  auto data = make_dataset(base.data);
  ModeCheckResult res;
  std::vector<std::vector<double>> cov(lambdas.size());
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    for (auto seed : seeds) {
      RunConfig cfg = base;
      cfg.lambda_const = lambdas[li];
      cfg.seed = seed;
      Trainer tr(cfg, data);
      for (std::int64_t i = 0; i < cfg.training_iterations; ++i) tr.step();
      Sampler s(&tr.model(), final_grid(cfg), false, params);
      auto score = score_gauss8(s.sample_one_step(samples, seed), cfg.data.sigma, seed);
      res.rows.push_back({lambdas[li], seed, score.coverage, score.w2});
      cov[li].push_back(score.coverage);
    }
  }
  for (std::size_t li = 1; li < lambdas.size(); ++li) res.p_values.push_back(mann_whitney(cov[0], cov[li]).p_greater);
  return res;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial consistency training: train, sample and audit desk-scale models", "act"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::function<int()> action;

  std::string config, ckpt, reference, mask;
  std::int64_t steps = -1, count = 512, sample_steps = 1, refine = 1, points = 10, seeds = 5, fid_points = 10;
  std::uint64_t seed = 0;
  std::string lambdas = "0.3,0.99";
  AuditOptions audit;
  ParamSet params = ParamSet::Online;
  const std::map<std::string, ParamSet> param_names{{"online", ParamSet::Online}, {"ema", ParamSet::Ema}};
  auto add_params = [&](CLI::App* cmd) {
    cmd->add_option("--params", params, "parameter set used for sampling: online or ema")
        ->transform(CLI::CheckedTransformer(param_names))
        ->option_text("online|ema");
  };

  auto* train = app.add_subcommand("train", "fresh training run from a config file");
  train->add_option("-c,--config", config, "run config")->required();
  train->callback([&] { action = [&] { return cmd_train(config, out); }; });

  auto* resume = app.add_subcommand("resume", "continue a run from a checkpoint");
  resume->add_option("--checkpoint", ckpt)->required();
  resume->add_option("--steps", steps, "steps to run (default: up to training_iterations)");
  resume->callback([&] { action = [&] { return cmd_resume(ckpt, steps, out); }; });

  auto* sample = app.add_subcommand("sample", "one-step or multistep sampling");
  sample->add_option("--checkpoint", ckpt)->required();
  sample->add_option("--count", count);
  sample->add_option("--seed", seed);
  sample->add_option("--steps", sample_steps, "model evaluations per sample");
  add_params(sample);
  sample->callback([&] { action = [&] { return cmd_sample(ckpt, count, seed, sample_steps, params, out); }; });

  auto* inpaint = app.add_subcommand("inpaint", "zero-shot inpainting of a reference image");
  inpaint->add_option("--checkpoint", ckpt)->required();
  inpaint->add_option("--reference", reference, "8-bit RGB PNG")->required();
  inpaint->add_option("--mask", mask, "8-bit RGB PNG, channels above 127 are known")->required();
  inpaint->add_option("--refine-steps", refine);
  inpaint->add_option("--seed", seed);
  add_params(inpaint);
  inpaint->callback([&] { action = [&] { return cmd_inpaint(ckpt, reference, mask, refine, seed, params, out); }; });

  auto* eval = app.add_subcommand("eval", "desk-FID, mode coverage and training-curve plots");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--count", count);
  eval->add_option("--seed", seed);
  eval->add_option("--fid-points", fid_points, "checkpoints scored for the desk-FID curve");
  add_params(eval);
  eval->callback([&] { action = [&] { return cmd_eval(ckpt, count, seed, fid_points, params, out); }; });

  auto* bound = app.add_subcommand("bound-check", "audit the W-distance bound over grid times");
  bound->add_option("--checkpoint", ckpt)->required();
  bound->add_option("--points", points, "audited grid times");
  bound->add_option("--samples", audit.samples);
  bound->add_option("--replicates", audit.replicates);
  bound->add_option("--seed", audit.seed);
  bound->callback([&] { action = [&] { return cmd_bound_check(ckpt, points, audit, out); }; });

  auto* mode = app.add_subcommand("mode-check", "mode coverage across adversarial weights");
  mode->add_option("-c,--config", config)->required();
  mode->add_option("--lambdas", lambdas, "comma-separated constant weights; the first is compared to the rest");
  mode->add_option("--seeds", seeds);
  mode->add_option("--count", count);
  add_params(mode);
  mode->callback([&] {
    action = [&] { return cmd_mode_check(config, parse_doubles(lambdas), seeds, count, params, out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error code=" << kExitFailure << " kind=usage message=" << quote(e.what()) << '\n';
    return kExitFailure;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    err << "error code=" << kExitConfig << " kind=config key=" << e.key() << " message=" << quote(e.what()) << '\n';
    return kExitConfig;
  } catch (const NonFiniteLoss& e) {
    err << "error code=" << kExitNonFinite << " kind=non_finite snapshot=" << e.snapshot_path()
        << " message=" << quote(e.what()) << '\n';
    return kExitNonFinite;
  } catch (const LoadError& e) {
    err << "error code=" << kExitFailure << " kind=load message=" << quote(e.what()) << '\n';
  } catch (const IngestionError& e) {
    err << "error code=" << kExitFailure << " kind=ingestion message=" << quote(e.what()) << '\n';
  } catch (const std::exception& e) {
    err << "error code=" << kExitFailure << " kind=runtime message=" << quote(e.what()) << '\n';
  }
  return kExitFailure;
}

}  // namespace act
