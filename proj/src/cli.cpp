#include "stmg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stmg/analysis.hpp"
#include "stmg/checkpoint.hpp"
#include "stmg/config.hpp"
#include "stmg/container.hpp"
#include "stmg/error.hpp"
#include "stmg/gradcheck.hpp"
#include "stmg/report.hpp"
#include "stmg/trainer.hpp"

namespace fs = std::filesystem;

namespace stmg {

std::size_t worker_count() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STMG_LAB_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

constexpr const char* kUsage =
    "usage: stmg-lab <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen-data    generate synthetic scenes (.mvs)\n"
    "  train       train a model, write checkpoint and run manifest\n"
    "  eval        evaluate a checkpoint on a scene directory\n"
    "  analyze     eye-movement statistics of a scene directory\n"
    "  render      export saliency and sound-source maps of one scene\n"
    "  grad-check  finite-difference gradient suite\n"
    "\n"
    "run `stmg-lab <command> --help` for the options of a command\n";

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::vector<std::string> scene_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ContractError("data directory '" + dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".mvs") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ContractError("no .mvs scenes in '" + dir + "'");
  return files;
}

struct Dataset {
  std::vector<SceneSequence> scenes;
  std::vector<std::pair<std::string, std::string>> raw;  // file name, bytes
};

Dataset load_dataset(const std::string& dir) {
  const std::vector<std::string> files = scene_files(dir);
  Dataset d;
  d.scenes.resize(files.size());
  d.raw.resize(files.size());
  parallel_for(files.size(), worker_count(), [&](std::size_t i) {
    d.raw[i] = {fs::path(files[i]).filename().string(), read_file(files[i])};
    try {
      d.scenes[i] = decode_scene(d.raw[i].second);
    } catch (const Error& e) {
      throw ContractError(files[i] + ": " + e.what());
    }
  });
  return d;
}

int cmd_gen_data(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::size_t> count,
                 const std::string& out_dir, std::ostream& out) {
  RunConfig cfg = base_config(config);
  if (seed) cfg.generator.seed = *seed;
  if (count) cfg.scenes = *count;
  cfg.generator.validate();
  fs::create_directories(out_dir);
  parallel_for(cfg.scenes, worker_count(), [&](std::size_t i) {
    write_scene(generate_scene(cfg.generator, i), (fs::path(out_dir) / fmt::format("scene_{:04d}.mvs", i)).string());
  });
  out << fmt::format("scenes={} out={}\n", cfg.scenes, out_dir);
  return 0;
}

struct TrainArgs {
  std::string config, data, out = "run", replay;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  RunManifest replayed;
  if (!a.replay.empty()) {
    replayed = RunManifest::from_json(nlohmann::json::parse(read_file(a.replay)));
    try {
      cfg = run_config_from_json(replayed.config);
      cfg.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(a.replay + ": " + e.what());
    }
  } else {
    cfg = base_config(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.batch) cfg.train.batch_size = *a.batch;
    if (a.lr) cfg.train.adam.lr = *a.lr;
    cfg.validate();
  }
  if (a.data.empty()) throw ContractError("train needs --data DIR");
  const Dataset data = load_dataset(a.data);
  const std::string input_hash = content_hash(data.raw);
  if (!a.replay.empty() && input_hash != replayed.input_hash) {
    err << fmt::format("error: input hash {} differs from the manifest's {}\n", input_hash, replayed.input_hash);
    return 1;
  }

  const TrainResult r = train_model(data.scenes, cfg, [&](const EpochLog& log) { out << format_epoch(log); });
  const std::string ckpt = encode_checkpoint(r.model);
  const RunManifest manifest = make_manifest(cfg, input_hash, r, ckpt);

  fs::create_directories(a.out);
  const std::string ckpt_path = (fs::path(a.out) / cfg.train.checkpoint).string();
  write_file_atomic(ckpt_path, ckpt);
  write_file_atomic((fs::path(a.out) / "manifest.json").string(), manifest.to_json().dump(2) + "\n");
  out << fmt::format("checkpoint={} checkpoint_hash={} input_hash={}\n", ckpt_path, manifest.checkpoint_hash, input_hash);

  if (!a.replay.empty()) {
    const bool same = manifest.checkpoint_hash == replayed.checkpoint_hash;
    out << fmt::format("replay={}\n", same ? "identical" : "diverged");
    return same ? 0 : 1;
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& out_path,
             std::ostream& out) {
  const Model model = read_checkpoint(checkpoint);
  const Dataset data = load_dataset(data_dir);
  for (const SceneSequence& s : data.scenes) check_compatible(s, model);
  EvalReport report;
  report.scenes.resize(data.scenes.size());
  std::vector<std::size_t> excluded(data.scenes.size(), 0);
  std::vector<std::vector<DetectionItem>> items(data.scenes.size());
  parallel_for(data.scenes.size(), worker_count(), [&](std::size_t i) {
    const ScenePrediction p = predict_scene(data.scenes[i], model);
    report.scenes[i] = evaluate_scene(data.scenes[i], p, &excluded[i]);
    items[i] = detection_items(data.scenes[i], p);
  });
  for (std::size_t e : excluded) report.excluded_saliency_frames += e;
  report.aggregate = aggregate_scenes(report.scenes);
  const std::string text = report.to_text();
  out << text;
  if (!out_path.empty()) write_file_atomic(out_path, text);
  return 0;
}

int cmd_analyze(const std::string& data_dir, const std::string& config, std::optional<std::uint64_t> seed,
                std::optional<std::size_t> count, std::size_t trials, std::ostream& out) {
  std::vector<SceneSequence> scenes;
  if (!data_dir.empty()) {
    scenes = load_dataset(data_dir).scenes;
  } else {
    RunConfig cfg = base_config(config);
    if (seed) cfg.generator.seed = *seed;
    if (count) cfg.scenes = *count;
    cfg.generator.validate();
    scenes.resize(cfg.scenes);
    parallel_for(cfg.scenes, worker_count(), [&](std::size_t i) { scenes[i] = generate_scene(cfg.generator, i); });
  }
  out << format_analysis(analyze_dataset(scenes, seed.value_or(0), trials));
  return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& scene_path, const std::string& out_dir,
               std::ostream& out) {
  const Model model = read_checkpoint(checkpoint);
  const SceneSequence scene = read_scene(scene_path);
  const ScenePrediction p = predict_scene(scene, model);
  fs::create_directories(out_dir);
  Container maps;
  maps.version = kSceneVersion;
  maps.meta = {{"kind", "maps"}, {"scene", scene.id}};
  const Shape stack{scene.frames, scene.grid.height, scene.grid.width};
  Tensor sal(stack), snd(stack);
  for (std::size_t t = 0; t < scene.frames; ++t) {
    std::copy(p.saliency[t].storage().begin(), p.saliency[t].storage().end(),
              sal.storage().begin() + static_cast<std::ptrdiff_t>(t * scene.grid.cells()));
    std::copy(p.sound_map[t].storage().begin(), p.sound_map[t].storage().end(),
              snd.storage().begin() + static_cast<std::ptrdiff_t>(t * scene.grid.cells()));
    write_file_atomic((fs::path(out_dir) / fmt::format("saliency_{:03d}.pgm", t)).string(), encode_pgm(p.saliency[t]));
    write_file_atomic((fs::path(out_dir) / fmt::format("sound_{:03d}.pgm", t)).string(), encode_pgm(p.sound_map[t]));
  }
  maps.tensors["saliency"] = std::move(sal);
  maps.tensors["sound"] = std::move(snd);
  write_file_atomic((fs::path(out_dir) / "maps.mvs").string(), encode_container(maps));
  out << fmt::format("frames={} out={}\n", scene.frames, out_dir);
  return 0;
}

int cmd_grad_check(const std::string& config, std::uint64_t seed, std::size_t instances, std::ostream& out) {
  const RunConfig cfg = base_config(config);
  PipelineCheckOptions opts;
  opts.instances = instances;
  const PipelineCheckReport r = pipeline_grad_check(cfg.network, seed, opts);
  out << fmt::format("instances={} tensors={} entries={} skipped={} failures={} max_error={:.3e}\n", r.instances,
                     r.tensors, r.entries, r.skipped, r.failures, r.max_error);
  if (!r.first_failure.empty()) out << "first_failure=" << r.first_failure << "\n";
  out << (r.passed() ? "grad-check passed\n" : "grad-check FAILED\n");
  return r.passed() ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "-h" || args[0] == "--help") {
    (args.empty() ? err : out) << kUsage;
    return args.empty() ? 2 : 0;
  }
  const std::string command = args[0];
  CLI::App app("stmg-lab " + command);
  std::string config, out_dir, data, checkpoint, scene, report_path, replay;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count, epochs, batch;
  std::optional<double> lr;
  std::size_t trials = 20, instances = 20;

  std::function<int()> action;
  if (command == "gen-data") {
    app.add_option("--config", config, "run config (JSON)");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--count", count, "number of scenes");
    out_dir = "data";
    app.add_option("--out", out_dir, "output directory");
    action = [&] { return cmd_gen_data(config, seed, count, out_dir, out); };
  } else if (command == "train") {
    app.add_option("--config", config, "run config (JSON)");
    app.add_option("--data", data, "directory of .mvs scenes")->required();
    out_dir = "run";
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "training seed");
    app.add_option("--epochs", epochs, "epochs");
    app.add_option("--batch", batch, "batch size");
    app.add_option("--lr", lr, "learning rate");
    app.add_option("--replay", replay, "re-run the configuration of a manifest and compare checkpoints");
    action = [&] { return cmd_train({config, data, out_dir, replay, seed, epochs, batch, lr}, out, err); };
  } else if (command == "eval") {
    app.add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    app.add_option("--data", data, "directory of .mvs scenes")->required();
    app.add_option("--out", report_path, "write the report here as well");
    action = [&] { return cmd_eval(checkpoint, data, report_path, out); };
  } else if (command == "analyze") {
    app.add_option("--data", data, "directory of .mvs scenes");
    app.add_option("--config", config, "generate scenes from this config instead");
    app.add_option("--seed", seed, "seed");
    app.add_option("--count", count, "number of generated scenes");
    app.add_option("--trials", trials, "split-half trials");
    action = [&] { return cmd_analyze(data, config, seed, count, trials, out); };
  } else if (command == "render") {
    app.add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    app.add_option("--scene", scene, "scene file")->required();
    out_dir = "maps";
    app.add_option("--out", out_dir, "output directory");
    action = [&] { return cmd_render(checkpoint, scene, out_dir, out); };
  } else if (command == "grad-check") {
    app.add_option("--config", config, "run config (network section)");
    app.add_option("--seed", seed, "seed");
    app.add_option("--instances", instances, "random instances");
    action = [&] { return cmd_grad_check(config, seed.value_or(0), instances, out); };
  } else {
    err << "unknown command '" << command << "'\n" << kUsage;
    return 2;
  }

  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace stmg
