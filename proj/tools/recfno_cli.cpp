// recfno: dataset generation, training, baselines and evaluation drivers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "recfno/checkpoint.hpp"
#include "recfno/eval.hpp"

namespace fs = std::filesystem;
using namespace recfno;

namespace {

std::pair<Index, Index> parse_pair(const std::string& text, const char* what) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      const Index v = std::stoll(text);
      return {v, v};
    }
    return {std::stoll(text.substr(0, x)), std::stoll(text.substr(x + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError(std::string(what) + ": expected AxB, got '" + text + "'");
  }
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Flags shared by every command that trains a model.
struct ModelFlags {
  std::string embedding = "voronoi";
  Index sensors = 25;
  std::string placement = "uniform";
  std::uint64_t sensor_seed = 0;
  Index layers = 4;
  Index width = 32;
  std::string modes = "12x12";
  Index mlp_hidden = 128;
  Index epochs = 100;
  Index batch = 8;
  double lr = 1e-3;
  double gamma = 0.97;
  Index pod_hidden = 256;
  Index pod_rank = -1;
};

void add_model_flags(CLI::App* c, ModelFlags& f) {
  c->add_option("--embedding", f.embedding, "Observation embedding")
      ->check(CLI::IsMember({"mask", "voronoi", "mlp"}))
      ->capture_default_str();
  c->add_option("--sensors", f.sensors, "Number of sensors")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--placement", f.placement, "Sensor placement")
      ->check(CLI::IsMember({"uniform", "random"}))
      ->capture_default_str();
  c->add_option("--sensor-seed", f.sensor_seed, "Seed for random placement")->capture_default_str();
  c->add_option("--layers", f.layers, "Fourier layers T")->capture_default_str();
  c->add_option("--width", f.width, "Channel width d_v")->capture_default_str();
  c->add_option("--modes", f.modes, "Retained modes K1xK2")->capture_default_str();
  c->add_option("--mlp-hidden", f.mlp_hidden, "Hidden width of the MLP embedding")->capture_default_str();
  c->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  c->add_option("--batch", f.batch, "Batch size")->capture_default_str();
  c->add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
  c->add_option("--gamma", f.gamma, "Per-epoch learning-rate decay")->capture_default_str();
  c->add_option("--pod-hidden", f.pod_hidden, "POD-MLP hidden width")->capture_default_str();
  c->add_option("--pod-rank", f.pod_rank, "POD rank (-1: 99% energy)")->capture_default_str();
}

ExperimentSpec make_spec(const ModelFlags& f, std::uint64_t seed, int jobs) {
  ExperimentSpec spec;
  spec.model.embedding.kind = parse_embedding_kind(f.embedding);
  spec.model.embedding.mlp_hidden = f.mlp_hidden;
  spec.model.layers = f.layers;
  spec.model.width = f.width;
  std::tie(spec.model.modes1, spec.model.modes2) = parse_pair(f.modes, "--modes");
  spec.train.epochs = f.epochs;
  spec.train.batch_size = f.batch;
  spec.train.lr0 = f.lr;
  spec.train.gamma = f.gamma;
  spec.train.seed = seed;
  spec.train.validate();
  spec.baseline.hidden = f.pod_hidden;
  spec.baseline.rank = f.pod_rank;
  spec.sensors = f.sensors;
  spec.placement = parse_placement(f.placement);
  spec.sensor_seed = f.sensor_seed;
  spec.jobs = jobs;
  return spec;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_metrics(const fs::path& path, const std::string& split, Index scale, const MetricReport& r,
                   const std::string& fp) {
  std::string text = "split,scale,samples,mae,max_ae,worst_ae,fingerprint\n";
  text += split + "," + std::to_string(scale) + "," + std::to_string(r.samples.size()) + "," + exact(r.mae) + "," +
          exact(r.max_ae) + "," + exact(r.worst_ae) + "," + fp + "\n";
  write_text(path, text);
}

TrainedModel trained_from(const Checkpoint& ck) {
  const auto kind = ck.meta.find("kind");
  TrainedModel m;
  if (kind != ck.meta.end() && kind->second == "pod-mlp") {
    m.method = Method::PodMlp;
    m.pod = std::make_shared<const PodMlp>(podmlp_from_checkpoint(ck));
  } else {
    Model model = model_from_checkpoint(ck);
    m.method = parse_method(to_string(model.config.embedding.kind));
    m.recfno = std::make_shared<const Model>(std::move(model));
  }
  return m;
}

std::string parameter_digest(const ParameterList& params) {
  KeyValues kv;
  for (const NamedParameter& p : params) {
    std::string bytes;
    std::visit([&](const auto& t) { bytes.assign(reinterpret_cast<const char*>(t.values().data()), sizeof(t.values()[0]) * t.size()); },
               p.value);
    kv[p.name] = bytes;
  }
  return fingerprint(kv);
}

// Resolved values of the global options and the chosen command's options, in the --config format.
std::string resolved_config(const CLI::App& app, const CLI::App& command) {
  std::string text = "# command: " + command.get_name() + "\n";
  auto emit = [&](const CLI::App& a, const std::string& prefix) {
    for (const CLI::Option* opt : a.get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "config") continue;
      std::string value;
      if (opt->count() > 0) {
        for (const std::string& v : opt->reduced_results()) value += (value.empty() ? "" : ",") + v;
      } else {
        value = opt->get_default_str();
        if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
      }
      if (!value.empty()) text += prefix + name + "=" + value + "\n";
    }
  };
  emit(app, "");
  emit(command, command.get_name() + ".");
  return text;
}

const std::vector<Point>& model_sensors(const TrainedModel& m) { return m.pod ? m.pod->sensors : m.recfno->sensors; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Field reconstruction from sparse sensors with Fourier neural operators"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file mirroring the flags; flags override it");

  std::string out;
  std::uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--seed", seed, "Global seed")->envname("RECFNO_SEED")->capture_default_str();
  app.add_option("--jobs", jobs, "Concurrent sweep points")->check(CLI::PositiveNumber)->capture_default_str();

  // gen
  std::string task = "heat", grid_text = "64x64", raw, manifest;
  Index count = 700;
  CLI::App* gen = app.add_subcommand("gen", "Generate or import a dataset");
  gen->add_option("--task", task, "Dataset")->check(CLI::IsMember({"darcy", "heat", "wake", "import"}))->capture_default_str();
  gen->add_option("--grid", grid_text, "Resolution HxW")->capture_default_str();
  gen->add_option("--count", count, "Number of snapshots")->capture_default_str();
  gen->add_option("--raw", raw, "float32 snapshot stack (import)");
  gen->add_option("--manifest", manifest, "Manifest for --raw (import)");

  std::string data, checkpoint, split = "test";
  ModelFlags flags;
  auto data_option = [&](CLI::App* c) { c->add_option("--data", data, "Dataset directory")->required(); };

  CLI::App* train = app.add_subcommand("train", "Train a RecFNO model");
  data_option(train);
  add_model_flags(train, flags);

  CLI::App* baseline = app.add_subcommand("baseline", "Train and test the POD-MLP baseline");
  data_option(baseline);
  add_model_flags(baseline, flags);

  CLI::App* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  data_option(evalc);
  evalc->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  evalc->add_option("--split", split, "train, val or test")->capture_default_str();

  Index scale = 2;
  CLI::App* superres = app.add_subcommand("superres", "Evaluate a checkpoint on a refined grid");
  data_option(superres);
  superres->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  superres->add_option("--scale", scale, "Refinement factor")->capture_default_str();
  superres->add_option("--split", split, "train, val or test")->capture_default_str();

  std::vector<double> snrs = {5, 10, 20, 40};
  std::string regime = "both";
  std::vector<std::string> methods = {"voronoi", "pod-mlp"};
  CLI::App* noise = app.add_subcommand("noise", "MAE against SNR");
  data_option(noise);
  add_model_flags(noise, flags);
  noise->add_option("--snr", snrs, "SNR list in dB")->delimiter(',')->capture_default_str();
  noise->add_option("--regime", regime, "both or inputs-only")->check(CLI::IsMember({"both", "inputs-only"}))->capture_default_str();
  noise->add_option("--methods", methods, "mask, voronoi, mlp, pod-mlp")->delimiter(',')->capture_default_str();

  std::vector<Index> mode_list = {4, 8, 16};
  CLI::App* ablate = app.add_subcommand("ablate", "MAE against retained Fourier modes");
  data_option(ablate);
  add_model_flags(ablate, flags);
  ablate->add_option("--mode-list", mode_list, "k values (k1 = k2 = k)")->delimiter(',')->capture_default_str();

  std::vector<Index> counts = {1, 4, 16, 25, 64};
  CLI::App* sweep = app.add_subcommand("sweep", "MAE against sensor count");
  data_option(sweep);
  add_model_flags(sweep, flags);
  sweep->add_option("--counts", counts, "Sensor counts")->delimiter(',')->capture_default_str();
  sweep->add_option("--methods", methods, "mask, voronoi, mlp, pod-mlp")->delimiter(',')->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const fs::path dir(out);
  const fs::path failed = dir / "FAILED";
  try {
    fs::create_directories(dir);
    fs::remove(failed);
    write_text(dir / "run.cfg", resolved_config(app, *app.get_subcommands().front()));

    auto method_list = [&]() {
      std::vector<Method> ms;
      for (const std::string& m : methods) ms.push_back(parse_method(m));
      return ms;
    };

    if (gen->parsed()) {
      FieldDataset ds;
      if (task == "import") {
        if (raw.empty() || manifest.empty()) throw ConfigError("gen --task import needs --raw and --manifest");
        ds = import_raw(raw, manifest);
      } else {
        const auto [h, w] = parse_pair(grid_text, "--grid");
        ds = generate_dataset(parse_task(task), GridSpec(h, w, task_extent(parse_task(task))), count, seed);
      }
      write_dataset(dir.string(), ds);
      std::cout << "wrote " << ds.size() << " snapshots (" << ds.grid.n_y << "x" << ds.grid.n_x << ") to " << dir.string()
                << "\n";
    } else if (train->parsed() || baseline->parsed()) {
      const FieldDataset ds = read_dataset(data);
      const ExperimentSpec spec = make_spec(flags, seed, jobs);
      const auto sensors = sensor_layout(ds.grid, spec.sensors, spec);
      const SupervisedSet tr = make_supervised(ds, "train", sensors), va = make_supervised(ds, "val", sensors);
      if (train->parsed()) {
        TrainConfig tc = spec.train;
        tc.checkpoint_path = (dir / "model.ckpt").string();
        ModelConfig cfg = spec.model;
        cfg.n_y = ds.grid.n_y;
        cfg.n_x = ds.grid.n_x;
        const TrainResult r = train_recfno(cfg, tr, va, tc);
        write_history_csv((dir / "history.csv").string(), r.history);
        std::cout << "best epoch " << r.best_epoch << " val MAE " << exact(r.best_val_mae) << "\n";
      } else {
        const PodMlpResult r = train_podmlp(tr, va, spec.train, spec.baseline);
        write_checkpoint((dir / "pod.ckpt").string(), podmlp_checkpoint(r.model));
        write_history_csv((dir / "history.csv").string(), r.history);
        const SupervisedSet te = make_supervised(ds, "test", sensors);
        const MetricReport m = evaluate([&](const ObservationSet& o) { return r.model.predict(o); }, te.inputs, te.targets);
        KeyValues kv = spec.to_key_values();
        for (const auto& [k, v] : dataset_keys(ds)) kv[k] = v;
        write_metrics(dir / "metrics.csv", "test", 1, m, fingerprint(kv));
        std::cout << "pod rank " << r.model.basis.rank() << " test MAE " << exact(m.mae) << "\n";
      }
    } else if (evalc->parsed() || superres->parsed()) {
      const FieldDataset ds = read_dataset(data);
      const Checkpoint ck = read_checkpoint(checkpoint);
      const TrainedModel m = trained_from(ck);
      // The checkpoint metadata and tensor digest identify the model independently of its path.
      KeyValues kv = dataset_keys(ds);
      for (const auto& [k, v] : ck.meta) kv["model." + k] = v;
      kv["model.digest"] = parameter_digest(ck.tensors);
      kv["split"] = split;
      MetricReport r;
      Index s = 1;
      if (evalc->parsed()) {
        const SupervisedSet set = make_supervised(ds, split, model_sensors(m));
        r = evaluate([&](const ObservationSet& o) { return m.predict(o); }, set.inputs, set.targets);
      } else {
        s = scale;
        r = superres_eval(m, ds, scale, split, (dir / "sample0").string());
      }
      kv["scale"] = std::to_string(s);
      write_metrics(dir / "metrics.csv", split, s, r, fingerprint(kv));
      std::cout << split << " MAE " << exact(r.mae) << " max-AE " << exact(r.max_ae) << "\n";
    } else {
      const FieldDataset ds = read_dataset(data);
      const ExperimentSpec spec = make_spec(flags, seed, jobs);
      ExperimentReport report;
      std::string name;
      if (noise->parsed()) {
        report = noise_experiment(ds, snrs, parse_regime(regime), method_list(), spec);
        name = "noise.csv";
      } else if (ablate->parsed()) {
        report = mode_ablation(ds, mode_list, parse_method(flags.embedding), spec);
        name = "ablation.csv";
      } else {
        report = sensor_sweep(ds, counts, method_list(), spec);
        name = "sweep.csv";
      }
      report.write_csv((dir / name).string());
      for (const ExperimentRow& r : report.rows) {
        std::cout << r.method << " sensors " << r.sensors << " " << r.regime << " snr " << r.snr_db << " modes " << r.modes
                  << " MAE " << exact(r.mae) << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::error_code ec;
    if (fs::is_directory(dir, ec)) std::ofstream(failed) << e.what() << "\n";
    return 1;
  }
  return 0;
}
