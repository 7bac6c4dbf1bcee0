#pragma once

// Command implementations behind the `adaptct` executable. Each command
// takes parsed options and two streams and returns the process exit code,
// so the whole pipeline can also be driven in-process.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "adaptct/checkpoint.hpp"
#include "adaptct/config.hpp"
#include "adaptct/eval.hpp"
#include "adaptct/phantom_io.hpp"
#include "adaptct/report.hpp"
#include "adaptct/trainer.hpp"

namespace adaptct::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadConfig = 2,
  kTrainingAborted = 3,
  kGeometryMismatch = 4,
  kMalformedCsv = 5,
};

struct Options {
  std::string config_path;              // empty: built-in defaults
  std::vector<std::string> overrides;   // "key=value", applied after the file
  std::optional<std::uint64_t> seed;    // command-specific seed key
  std::optional<int> workers;
  bool mask_repeats = false;
  bool greedy = false;                  // eval: skip the sampling learned policy
  std::string out = ".";
  std::string data_dir;                 // empty: same as out
  std::string resume;                   // train: checkpoint to continue from
  std::string checkpoint;               // eval: learned policy (optional)
  std::vector<std::string> inputs;      // plot: CSV files; inspect: checkpoint
  std::size_t window = 500;             // plot: rolling window
};

/// Geometry disagreement between artifacts (corpus, checkpoint, config).
class GeometryMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline RunConfig base_config(const Options& o, const std::optional<std::string>& fallback_text = std::nullopt) {
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file '" + o.config_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
  }
  if (fallback_text) return parse_config(*fallback_text);
  return RunConfig{};
}

inline void apply_overrides(RunConfig& cfg, const Options& o) {
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
    set_config_value(cfg, config_detail::trim(kv.substr(0, eq)), config_detail::trim(kv.substr(eq + 1)));
  }
  if (o.workers) cfg.eval.workers = *o.workers;
  if (o.mask_repeats) cfg.env.mask_repeats = true;
  if (o.greedy) cfg.eval.sampled = false;
}

inline fs::path data_path(const Options& o, const std::string& name) {
  const fs::path p(name);
  if (p.is_absolute()) return p;
  return fs::path(o.data_dir.empty() ? o.out : o.data_dir) / p;
}

inline void echo_config(const RunConfig& cfg, const std::string& command, const Options& o, std::ostream& out) {
  const std::string text = resolved_config_text(cfg);
  out << "# resolved config (" << command << ")\n" << text;
  std::ofstream(fs::path(o.out) / (command + ".config")) << text;
}

inline void check_image_size(int corpus, int expected, const std::string& what) {
  if (corpus != expected)
    throw GeometryMismatch("image size mismatch: corpus has " + std::to_string(corpus) + " px, " + what + " has " +
                           std::to_string(expected) + " px");
}

/// Keys that may change between a checkpoint and the run resuming it.
inline bool run_length_key(const std::string& key) {
  return key == "train.episodes" || key == "train.checkpoint_every" || key == "train.episode_log" ||
         key == "data.train_path" || key == "data.test_path";
}

inline std::map<std::string, std::string> config_map(const std::string& text) {
  std::map<std::string, std::string> m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) m[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
  }
  return m;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UnknownKeyError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const GeometryMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kGeometryMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    RunConfig cfg = detail::base_config(o);
    detail::apply_overrides(cfg, o);
    if (o.seed) cfg.data.seed = *o.seed;
    cfg.validate();
    fs::create_directories(o.out);
    detail::echo_config(cfg, "gen-data", o, out);
    for (const auto& [spec, name] : {std::pair{cfg.train_dataset(), cfg.data.train_path},
                                     std::pair{cfg.test_dataset(), cfg.data.test_path}}) {
      const auto phantoms = generate_dataset(spec);
      const fs::path path = detail::data_path(o, name);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      save_phantoms(path.string(), phantoms, spec.image_size);
      std::map<std::string, int> kinds;
      for (const auto& p : phantoms) ++kinds[std::string(to_string(p.spec.kind))];
      out << path.string() << ": " << phantoms.size() << " phantoms, " << spec.image_size << " px;";
      for (const auto& [k, n] : kinds) out << ' ' << k << '=' << n;
      out << "; rotations";
      for (double r : spec.rotation_grid) out << ' ' << format_real(r);
      out << '\n';
    }
    return int(kOk);
  });
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    std::optional<Checkpoint> resume;
    if (!o.resume.empty()) resume = load_checkpoint(o.resume);
    RunConfig cfg = detail::base_config(o, resume ? std::optional(resume->config_text) : std::nullopt);
    detail::apply_overrides(cfg, o);
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.validate();
    if (resume) {
      const auto saved = detail::config_map(resume->config_text);
      const auto now = detail::config_map(resolved_config_text(cfg));
      for (const auto& [key, value] : now)
        if (!detail::run_length_key(key) && saved.count(key) && saved.at(key) != value)
          throw ConfigError("config key '" + key + "' differs from the checkpoint (" + saved.at(key) + " vs " + value + ")");
    }
    fs::create_directories(o.out);
    detail::echo_config(cfg, "train", o, out);

    const PhantomCorpus corpus = load_phantoms(detail::data_path(o, cfg.data.train_path).string());
    detail::check_image_size(corpus.image_size, cfg.data.image_size, "config");
    auto projector = std::make_shared<Projector>(cfg.geometry());
    auto env = std::make_shared<Environment>(projector, cfg.recon, cfg.env.reward_mode);
    auto data = std::make_shared<std::vector<Phantom>>(corpus.phantoms);
    const TrainConfig tc = cfg.train_config();
    TrainerState state = resume ? std::move(resume->state) : init_trainer_state(cfg.agent_config(), tc);
    Trainer trainer(env, data, tc, std::move(state));

    const fs::path metrics_path = fs::path(o.out) / "metrics.csv";
    const bool append = resume && fs::exists(metrics_path);
    std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!append) metrics << kMetricsCsvHeader << '\n';
    std::ofstream episode_log;
    if (cfg.train.episode_log) {
      episode_log.open(fs::path(o.out) / "episodes.ndjson", append ? std::ios::app : std::ios::trunc);
      trainer.set_step_observer([&](std::uint64_t ep, int step, int angle, double reward, double psnr) {
        nlohmann::json j{{"episode", ep}, {"step", step}, {"angle", angle}, {"reward", reward}, {"psnr", psnr}};
        episode_log << j.dump() << '\n';
      });
    }
    const std::string config_text = resolved_config_text(cfg);
    auto snapshot = [&](const fs::path& path) { save_checkpoint(path.string(), Checkpoint{config_text, trainer.state()}); };

    const auto target = static_cast<std::uint64_t>(cfg.train.episodes);
    try {
      while (trainer.state().episode < target) {
        const TrainRecord rec = trainer.run_episode();
        metrics << metrics_csv_row(rec) << '\n';
        const std::uint64_t done = trainer.state().episode;
        if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 && done < target) {
          metrics.flush();
          snapshot(fs::path(o.out) / ("checkpoint_" + std::to_string(done) + ".ctac"));
        }
      }
    } catch (const TrainingAborted& e) {
      metrics.flush();
      const fs::path partial = fs::path(o.out) / "checkpoint_partial.ctac";
      snapshot(partial);
      err << "training aborted: " << e.what() << "\npartial checkpoint: " << partial.string() << "\n";
      return int(kTrainingAborted);
    }
    metrics.flush();
    const fs::path final_path = fs::path(o.out) / "checkpoint.ctac";
    snapshot(final_path);
    out << "trained to episode " << trainer.state().episode << "; wrote " << metrics_path.string() << " and "
        << final_path.string() << "\n";
    return int(kOk);
  });
}

inline int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    std::optional<Checkpoint> ck;
    if (!o.checkpoint.empty()) ck = load_checkpoint(o.checkpoint);
    RunConfig cfg = detail::base_config(o, ck ? std::optional(ck->config_text) : std::nullopt);
    detail::apply_overrides(cfg, o);
    if (o.seed) cfg.eval.seed = *o.seed;
    cfg.validate();
    fs::create_directories(o.out);
    detail::echo_config(cfg, "eval", o, out);

    const PhantomCorpus corpus = load_phantoms(detail::data_path(o, cfg.data.test_path).string());
    std::optional<AgentParams> params;
    if (ck) {
      params = ck->state.params;
      detail::check_image_size(corpus.image_size, params->config.image_size, "checkpoint");
    }
    detail::check_image_size(corpus.image_size, cfg.data.image_size, "config");
    auto projector = std::make_shared<Projector>(cfg.geometry());
    const Environment env(projector, cfg.recon, cfg.env.reward_mode);

    std::vector<PolicySpec> policies;
    if (params) {
      PolicySpec g = PolicySpec::learned(*params, true);
      g.mask_repeats = cfg.env.mask_repeats;
      policies.push_back(g);
      if (cfg.eval.sampled) {
        PolicySpec s = PolicySpec::learned(*params, false);
        s.mask_repeats = cfg.env.mask_repeats;
        policies.push_back(s);
      }
    }
    policies.push_back(PolicySpec::equidistant());
    policies.push_back(PolicySpec::random());

    const double noise = cfg.eval_noise_level();
    std::ofstream summary(fs::path(o.out) / "summary.csv");
    summary << kSummaryCsvHeader << '\n';
    out << "# summary (mean ± std final PSNR [dB], noise level " << format_real(noise) << ")\n";
    for (int m : cfg.eval.horizons) {
      for (const auto& policy : policies) {
        const EvalReport rep =
            evaluate(policy, env, corpus.phantoms, m, noise, cfg.eval.seed, cfg.eval.workers, cfg.data.test_path);
        std::ofstream(fs::path(o.out) / ("report_" + rep.policy_id + "_M" + std::to_string(m) + ".csv")) << report_csv(rep);
        summary << summary_row(rep) << '\n';
        out << rep.policy_id << ", M=" << m << ": " << summary_cell(rep);
        if (m >= 2) {
          const auto c = angle_concentration(rep, 2);
          if (c.defined) out << "  (median angle distance, steps 2..M: " << format_real(c.median) << " deg)";
        }
        out << '\n';
      }
    }
    return int(kOk);
  });
}

inline int cmd_plot(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    fs::create_directories(o.out);
    // M -> policy -> final PSNR values
    std::map<int, std::map<std::string, std::vector<double>>> boxes;
    auto emit = [&](const std::string& name, const std::string& svg) {
      const fs::path p = fs::path(o.out) / name;
      std::ofstream(p) << svg;
      out << "wrote " << p.string() << '\n';
    };
    for (const auto& input : o.inputs) {
      const auto bytes = io::read_file(input);
      const std::string stem = fs::path(input).stem().string();
      CsvTable t;
      try {
        t = parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        if (t.header.empty()) {
          emit(stem + ".svg", training_curve_svg({}, {}, o.window, "value"));
          continue;
        }
        const std::string header = [&] {
          std::string h;
          for (std::size_t i = 0; i < t.header.size(); ++i) h += (i ? "," : "") + t.header[i];
          return h;
        }();
        if (header == kMetricsCsvHeader) {
          std::vector<double> episodes, ret, psnr;
          for (std::size_t r = 0; r < t.rows.size(); ++r) {
            episodes.push_back(csv_number(t, r, 0));
            ret.push_back(csv_number(t, r, 1));
            psnr.push_back(csv_number(t, r, 2));
          }
          emit(stem + "_return.svg", training_curve_svg(episodes, ret, o.window, "return"));
          emit(stem + "_final_psnr.svg", training_curve_svg(episodes, psnr, o.window, "final PSNR [dB]"));
        } else if (header == kReportCsvHeader) {
          for (std::size_t r = 0; r < t.rows.size(); ++r)
            boxes[static_cast<int>(csv_number(t, r, 1))][t.rows[r][0]].push_back(csv_number(t, r, 5));
        } else if (header == kSummaryCsvHeader) {
          // mean +- std rendered as a degenerate box
          std::map<int, std::map<std::string, std::vector<double>>> bars;
          for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const double mean = csv_number(t, r, 2), sd = csv_number(t, r, 3);
            bars[static_cast<int>(csv_number(t, r, 1))][t.rows[r][0]] = {mean - sd, mean, mean + sd};
          }
          if (bars.empty()) emit(stem + ".svg", box_plot_svg({}, "summary"));
          for (const auto& [m, series] : bars)
            emit(stem + "_M" + std::to_string(m) + ".svg", box_plot_svg(series, "mean ± std, M = " + std::to_string(m)));
        } else {
          throw CsvError(1, "unrecognized header '" + header + "'");
        }
      } catch (const CsvError& e) {
        err << "error: " << input << ": " << e.what() << "\n";
        return kMalformedCsv;
      }
    }
    for (const auto& [m, series] : boxes)
      emit("compare_M" + std::to_string(m) + ".svg", box_plot_svg(series, "final PSNR, M = " + std::to_string(m)));
    return kOk;
  });
}

inline int cmd_inspect_checkpoint(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (o.inputs.size() != 1) throw ConfigError("inspect-checkpoint expects one checkpoint path");
    const Checkpoint ck = load_checkpoint(o.inputs.front());
    out << "format: CTAC v" << kCheckpointVersion << " (checksum ok)\n"
        << "episode: " << ck.state.episode << "\n"
        << "parameters: " << ck.state.params.parameter_count() << "\n";
    ck.state.params.for_each([&](const std::string& name, const Tensor& t) {
      out << "  " << name << ' ' << nn::shape_string(t.shape) << '\n';
    });
    out << "adam policy: t=" << ck.state.policy_opt.t << " lr=" << format_real(ck.state.policy_opt.lr) << '\n'
        << "adam value: t=" << ck.state.value_opt.t << " lr=" << format_real(ck.state.value_opt.lr) << '\n'
        << "# config\n"
        << ck.config_text;
    return int(kOk);
  });
}

}  // namespace adaptct::cli
