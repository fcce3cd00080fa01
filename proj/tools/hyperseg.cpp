// hyperseg: command-line front end for data generation, training, evaluation
// and the analysis exports.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hyperseg/evaluation.hpp"
#include "hyperseg/io.hpp"
#include "hyperseg/memory.hpp"
#include "hyperseg/synth.hpp"
#include "hyperseg/training.hpp"

namespace fs = std::filesystem;
using namespace hyperseg;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string hierarchy;
  double curvature = 1.0;
  std::size_t dims = 2;
  std::string config;
  std::string data;
  std::string model;
  std::size_t epochs = 50;
  double lr0 = 0.01;
};

// Registers the shared flags and returns the options that a config file may fill.
std::map<std::string, CLI::Option*> add_common(CLI::App* cmd, Common& c, bool training_flags) {
  std::map<std::string, CLI::Option*> opts;
  opts["seed"] = cmd->add_option("--seed", c.seed, "Random seed");
  opts["out"] = cmd->add_option("--out", c.out, "Output path");
  opts["hierarchy"] = cmd->add_option("--hierarchy", c.hierarchy, "Hierarchy JSON file");
  opts["curvature"] = cmd->add_option("--curvature", c.curvature, "Ball curvature c (0 = Euclidean)");
  opts["dims"] = cmd->add_option("--dims", c.dims, "Embedding dimension");
  opts["data"] = cmd->add_option("--data", c.data, "Dataset directory");
  cmd->add_option("--config", c.config, "key = value config file; flags take precedence");
  if (training_flags) {
    opts["epochs"] = cmd->add_option("--epochs", c.epochs, "Training epochs");
    opts["lr0"] = cmd->add_option("--lr", c.lr0, "Base learning rate");
  }
  return opts;
}

void apply_config(Common& c, const std::map<std::string, CLI::Option*>& opts) {
  if (c.config.empty()) return;
  std::ifstream in(c.config);
  if (!in) throw std::runtime_error("cannot open config file " + c.config);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error("config: expected key = value, got '" + line + "'");
      continue;
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = opts.find(key == "lr" ? "lr0" : key);
    if (it == opts.end()) throw std::runtime_error("config: unknown key '" + key + "'");
    if (it->second->count() > 0) continue;
    if (key == "seed") c.seed = std::stoull(value);
    else if (key == "out") c.out = value;
    else if (key == "hierarchy") c.hierarchy = value;
    else if (key == "curvature") c.curvature = std::stod(value);
    else if (key == "dims") c.dims = std::stoul(value);
    else if (key == "data") c.data = value;
    else if (key == "epochs") c.epochs = std::stoul(value);
    else if (key == "lr" || key == "lr0") c.lr0 = std::stod(value);
  }
}

ClassHierarchy resolve_hierarchy(const Common& c) {
  if (!c.hierarchy.empty()) return ClassHierarchy::load(c.hierarchy);
  if (!c.data.empty() && fs::exists(fs::path(c.data) / "hierarchy.json"))
    return ClassHierarchy::load(fs::path(c.data) / "hierarchy.json");
  return toy_hierarchy();
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::ValidationError(std::string(flag) + " is required");
}

std::vector<std::size_t> parse_leaf_list(const std::string& list, const ClassHierarchy& tree) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto leaf = tree.leaf_by_name(name);
    if (!leaf) throw std::invalid_argument("unknown leaf '" + name + "'");
    out.push_back(*leaf);
  }
  return out;
}

void write_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  out << "epoch,loss,pixel_accuracy\n" << std::setprecision(10);
  for (const EpochLog& e : log) out << e.epoch << ',' << e.loss << ',' << e.pixel_accuracy << '\n';
}

int run_gen_data(const Common& c, const GeneratorConfig& gen) {
  require(c.out, "--out");
  const ClassHierarchy tree = resolve_hierarchy(c);
  const Dataset data = generate(gen, tree, c.seed);
  save_dataset(c.out, data, tree);
  std::cout << "wrote " << data.size() << " samples to " << c.out << " (checksum " << std::hex
            << dataset_checksum(c.out) << std::dec << ")\n";
  return 0;
}

int run_train(const Common& c) {
  require(c.data, "--data");
  const std::string out = c.out.empty() ? "model.json" : c.out;
  const ClassHierarchy tree = resolve_hierarchy(c);
  const Dataset data = load_dataset(c.data);
  const TrainConfig cfg{c.dims, c.curvature, c.lr0, c.epochs, c.seed};
  const TrainResult r = train(cfg, data, tree);
  save_model(out, r.params, tree);
  write_log(out + ".log.csv", r.log);
  const EpochLog& last = r.log.back();
  std::cout << "trained " << cfg.epochs << " epochs: loss " << last.loss << ", pixel accuracy "
            << last.pixel_accuracy << "\nmodel: " << out << "\nlog: " << out << ".log.csv\n";
  return 0;
}

int run_eval(const Common& c) {
  require(c.model, "--model");
  require(c.data, "--data");
  const auto [params, tree] = load_model(c.model);
  const Dataset data = load_dataset(c.data);
  const ConfusionMatrix conf = evaluate(params, data, tree, tree.all_leaves());
  const MetricRecord record = compute_metrics(conf, tree);
  if (c.out.empty()) {
    write_metrics_table(std::cout, record);
  } else {
    std::ofstream out(c.out);
    write_metrics_table(out, record);
    std::cout << "metrics: " << c.out << '\n';
  }
  return 0;
}

int run_bench_mem(const Common& c, std::vector<FootprintConfig> measured, bool skip_measure) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!c.out.empty()) {
    file.open(c.out);
    out = &file;
  }
  write_report_header(*out);
  const FootprintConfig reference{};
  for (FootprintMode m : {FootprintMode::kNaive, FootprintMode::kTractable, FootprintMode::kEuclidean})
    write_report_row(*out, reference, m, footprint_model(reference, m), nullptr);
  if (!skip_measure)
    for (FootprintConfig cfg : measured)
      for (FootprintMode m : {FootprintMode::kNaive, FootprintMode::kTractable, FootprintMode::kEuclidean}) {
        const Measurement meas = measure(cfg, m, c.seed);
        write_report_row(*out, cfg, m, footprint_model(cfg, m), &meas);
      }
  if (!c.out.empty()) std::cout << "report: " << c.out << '\n';
  return 0;
}

int run_boundary(const Common& c, std::size_t bins) {
  require(c.model, "--model");
  require(c.data, "--data");
  const std::string out = c.out.empty() ? "boundary.csv" : c.out;
  const auto [params, tree] = load_model(c.model);
  const Dataset data = load_dataset(c.data);
  const auto bg = background_leaf(tree);
  std::ofstream rows(out);
  rows << "image,correlation,status\n" << std::setprecision(10);
  TriClassStats tri;
  std::vector<double> correlations;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SegResult r = segment(params, data[i].features, tree, tree.all_leaves());
    const BoundaryReport rep = boundary_analysis(data[i].labels, r, bg);
    tri.merge(rep.tri);
    rows << i << ',';
    if (!rep.correlation) {
      rows << "NA,single_class\n";
      continue;
    }
    rows << *rep.correlation << ',' << (rep.degenerate_variance ? "degenerate_variance" : "ok") << '\n';
    correlations.push_back(*rep.correlation);
  }
  std::ofstream hist(out + ".hist.csv");
  hist << "bin_low,bin_high,count\n";
  for (const HistogramBin& b : correlation_histogram(correlations, bins))
    hist << b.low << ',' << b.high << ',' << b.count << '\n';
  std::ofstream means(out + ".triclass.csv");
  means << "group,mean_confidence,pixels\n" << std::setprecision(10);
  const char* names[] = {"boundary", "background", "foreground"};
  for (std::size_t g = 0; g < 3; ++g) {
    const auto m = tri.mean(g);
    means << names[g] << ',';
    if (m) means << *m; else means << "NA";
    means << ',' << tri.count[g] << '\n';
  }
  std::cout << "per-image correlations: " << out << "\nhistogram: " << out << ".hist.csv\ntri-class means: " << out
            << ".triclass.csv\n";
  return 0;
}

int run_zero_label(const Common& c, const std::string& unseen_names) {
  require(c.data, "--data");
  const ClassHierarchy tree = resolve_hierarchy(c);
  const Dataset data = load_dataset(c.data);
  const auto unseen = parse_leaf_list(unseen_names, tree);
  const ZeroLabelSplit split = zero_label_protocol(data, unseen, tree);
  const TrainResult r = train({c.dims, c.curvature, c.lr0, c.epochs, c.seed}, split.train, tree);
  const ConfusionMatrix conf = evaluate(r.params, data, tree, split.unseen, split.unseen);
  const MetricRecord record = compute_metrics(conf, tree);
  if (c.out.empty()) {
    write_metrics_table(std::cout, record);
  } else {
    std::ofstream out(c.out);
    write_metrics_table(out, record);
    std::cout << "zero-label metrics: " << c.out << '\n';
  }
  return 0;
}

int run_export_disk(const Common& c, std::size_t resolution) {
  require(c.model, "--model");
  const auto [params, tree] = load_model(c.model);
  if (params.dims() != 2)
    throw CLI::ValidationError("export-disk needs a model with --dims 2 (model has " +
                               std::to_string(params.dims()) + ")");
  const std::string prefix = c.out.empty() ? "disk" : c.out;
  const Curvature curv = params.curvature();

  double extent = curv.euclidean() ? 0.0 : 1.0 / curv.sqrt();
  {
    std::ofstream px(prefix + "_pixels.csv");
    px << "image,x,y,label\n" << std::setprecision(10);
    if (!c.data.empty()) {
      const Dataset data = load_dataset(c.data);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const Field<double> z = embed(params, data[i].features);
        for (std::size_t k = 0; k < z.pixels(); ++k) {
          const auto p = z.pixel(k);
          px << i << ',' << p[0] << ',' << p[1] << ',' << static_cast<int>(data[i].labels[k]) << '\n';
          if (curv.euclidean()) extent = std::max(extent, 1.1 * norm(p));
        }
      }
    }
  }
  if (extent == 0.0) extent = 1.0;

  // Zero contour of <-p (+) z, w> per plane, by sign changes between grid neighbours.
  std::ofstream planes(prefix + "_planes.csv");
  planes << "plane,node,x,y\n" << std::setprecision(10);
  const double step = 2.0 * extent / static_cast<double>(resolution - 1);
  const double limit = curv.euclidean() ? extent : curv.max_norm();
  std::vector<double> field(resolution * resolution);
  std::vector<std::uint8_t> inside(resolution * resolution);
  for (std::size_t y = 0; y < params.bank.size(); ++y) {
    const auto p = params.bank.offset(y);
    const auto w = params.bank.orientation(y);
    const double p_hat[2] = {-p[0], -p[1]};
    for (std::size_t r = 0; r < resolution; ++r)
      for (std::size_t q = 0; q < resolution; ++q) {
        const double z[2] = {-extent + step * static_cast<double>(q), -extent + step * static_cast<double>(r)};
        const std::size_t k = r * resolution + q;
        inside[k] = std::hypot(z[0], z[1]) < limit;
        field[k] = inside[k] ? mobius_products(p_hat, z, w, curv).inner : 0.0;
      }
    auto emit = [&](std::size_t a, std::size_t b) {
      if (!inside[a] || !inside[b]) return;
      const double fa = field[a], fb = field[b];
      if ((fa < 0.0) == (fb < 0.0)) return;
      const double t = fa / (fa - fb);
      const double xa = -extent + step * static_cast<double>(a % resolution);
      const double ya = -extent + step * static_cast<double>(a / resolution);
      const double xb = -extent + step * static_cast<double>(b % resolution);
      const double yb = -extent + step * static_cast<double>(b / resolution);
      planes << y << ',' << tree.name(y + 1) << ',' << xa + t * (xb - xa) << ',' << ya + t * (yb - ya) << '\n';
    };
    for (std::size_t r = 0; r < resolution; ++r)
      for (std::size_t q = 0; q < resolution; ++q) {
        if (q + 1 < resolution) emit(r * resolution + q, r * resolution + q + 1);
        if (r + 1 < resolution) emit(r * resolution + q, (r + 1) * resolution + q);
      }
  }
  std::cout << "pixels: " << prefix << "_pixels.csv\nplanes: " << prefix << "_planes.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic per-pixel classification toolkit"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, bench_c, bound_c, zero_c, disk_c;
  GeneratorConfig gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic segmentation dataset");
  auto gen_opts = add_common(gen_cmd, gen_c, false);
  gen_cmd->add_option("--samples", gen.samples, "Number of images");
  gen_cmd->add_option("--height", gen.height, "Image height");
  gen_cmd->add_option("--width", gen.width, "Image width");
  gen_cmd->add_option("--noise", gen.noise, "Feature noise standard deviation");
  gen_cmd->add_option("--min-shapes", gen.min_shapes, "Fewest shapes per image");
  gen_cmd->add_option("--max-shapes", gen.max_shapes, "Most shapes per image");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  auto train_opts = add_common(train_cmd, train_c, true);

  auto* eval_cmd = app.add_subcommand("eval", "Standard, sibling and cousin metrics of a trained model");
  auto eval_opts = add_common(eval_cmd, eval_c, false);
  eval_cmd->add_option("--model", eval_c.model, "Model file");

  auto* bench_cmd = app.add_subcommand("bench-mem", "Footprint model and measured kernel allocations");
  auto bench_opts = add_common(bench_cmd, bench_c, false);
  bool model_only = false;
  std::vector<std::size_t> custom;
  bench_cmd->add_flag("--model-only", model_only, "Skip the measured runs");
  bench_cmd->add_option("--measure", custom, "Measure W H C n B instead of the default desk configs")
      ->expected(5);

  auto* bound_cmd = app.add_subcommand("boundary", "Confidence vs boundary-distance analysis");
  auto bound_opts = add_common(bound_cmd, bound_c, false);
  bound_cmd->add_option("--model", bound_c.model, "Model file");
  std::size_t bins = 20;
  bound_cmd->add_option("--bins", bins, "Histogram bins over [-1, 1]");

  auto* zero_cmd = app.add_subcommand("zero-label", "Train without unseen classes, infer among them only");
  auto zero_opts = add_common(zero_cmd, zero_c, true);
  std::string unseen = "grass,dog";
  zero_cmd->add_option("--unseen", unseen, "Comma-separated unseen leaf names");

  auto* disk_cmd = app.add_subcommand("export-disk", "Export 2-D embeddings and gyroplane contours");
  auto disk_opts = add_common(disk_cmd, disk_c, false);
  disk_cmd->add_option("--model", disk_c.model, "Model file");
  std::size_t resolution = 512;
  disk_cmd->add_option("--resolution", resolution, "Contour scan grid size")->check(CLI::Range(2, 8192));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) {
      apply_config(gen_c, gen_opts);
      return run_gen_data(gen_c, gen);
    }
    if (*train_cmd) {
      apply_config(train_c, train_opts);
      return run_train(train_c);
    }
    if (*eval_cmd) {
      apply_config(eval_c, eval_opts);
      return run_eval(eval_c);
    }
    if (*bench_cmd) {
      apply_config(bench_c, bench_opts);
      std::vector<FootprintConfig> configs{{128, 128, 50, 64, 1, 4}, {64, 64, 20, 32, 2, 4}, {96, 64, 10, 16, 1, 4}};
      if (!custom.empty()) configs = {{custom[0], custom[1], custom[2], custom[3], custom[4], 4}};
      return run_bench_mem(bench_c, configs, model_only);
    }
    if (*bound_cmd) {
      apply_config(bound_c, bound_opts);
      return run_boundary(bound_c, bins);
    }
    if (*zero_cmd) {
      apply_config(zero_c, zero_opts);
      return run_zero_label(zero_c, unseen);
    }
    if (*disk_cmd) {
      apply_config(disk_c, disk_opts);
      return run_export_disk(disk_c, resolution);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
