// Command-line front end: data generation, training, evaluation and the
// standalone analysis commands. Reports are JSON; exit codes 0 ok, 2 config
// error, 3 numerical abort, 1 anything else.

#include "x3d/cloud_io.hpp"
#include "x3d/error.hpp"
#include "x3d/harness/config.hpp"
#include "x3d/metrics.hpp"
#include "x3d/mlp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace x3d;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
};

harness::ExperimentConfig load(const Common& c, bool seed_is_dataset = false) {
  harness::ExperimentConfig cfg = c.config.empty() ? harness::ExperimentConfig{} : harness::load_config(c.config);
  if (c.seed) {
    if (seed_is_dataset) {
      cfg.dataset.seed = *c.seed;
    } else {
      cfg.train.seed = *c.seed;
      cfg.eval.probe.options.seed = *c.seed;
    }
  }
  if (c.jobs) cfg.eval.jobs = *c.jobs;
  cfg.validate();
  return cfg;
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw FormatError("cannot write " + out);
  f << j.dump(2) << '\n';
}

void add_common(CLI::App* cmd, Common& c, bool with_jobs = true) {
  cmd->add_option("--config", c.config, "experiment config (INI-style key=value with sections)");
  cmd->add_option("--seed", c.seed, "seed override");
  cmd->add_option("--out", c.out, "output path");
  if (with_jobs) cmd->add_option("--jobs", c.jobs, "evaluation threads")->check(CLI::PositiveNumber);
}

void write_split(const fs::path& dir, const harness::Dataset& ds, json& index) {
  fs::create_directories(dir);
  json files = json::array();
  for (Index i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    PointCloud cloud = s.cloud;
    cloud.features = Matrix(s.normals);
    cloud.labels = std::vector<int>(static_cast<std::size_t>(cloud.size()), s.label);
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".x3pc";
    io::write_x3pc(dir / name.str(), cloud);
    files.push_back({{"file", (dir.filename() / name.str()).string()}, {"label", s.label}});
  }
  index[dir.filename().string()] = files;
}

PointCloud read_cloud(const std::string& path) {
  const fs::path p(path);
  if (p.extension() == ".ply") return io::read_ply(p);
  return io::read_x3pc(p);
}

std::vector<Index> parse_indices(const std::string& s) {
  std::vector<Index> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stol(item));
    } catch (const std::exception&) {
      throw ConfigError("bad index '" + item + "'");
    }
  }
  return out;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-3D point-cloud structure modeling toolkit"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, gap_c, probe_c, dump_c;
  std::string checkpoint, probe_task = "bins", geo_input, geo_sources, flops_method = "x3d", flops_es = "ph";
  Index geo_k = 8, sample_index = 0, flops_points = 1024, flops_channels = 256, flops_k = 16;
  metrics::CostDims dims;
  std::string geo_out, flops_out;
  bool flops_table = false;

  auto* gen = app.add_subcommand("gen", "generate the synthetic shape dataset");
  add_common(gen, gen_c, false);

  auto* tr = app.add_subcommand("train", "train a model and write report.json + model.x3ck");
  add_common(tr, train_c);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_c);
  ev->add_option("--checkpoint", checkpoint, "X3CK parameter file")->required();

  auto* gp = app.add_subcommand("gap", "geometric-awareness (GAP) report of a checkpoint");
  add_common(gp, gap_c);
  gp->add_option("--checkpoint", checkpoint, "X3CK parameter file")->required();

  auto* pr = app.add_subcommand("probe", "train a frozen-feature geometry probe");
  add_common(pr, probe_c);
  pr->add_option("--checkpoint", checkpoint, "X3CK parameter file")->required();
  pr->add_option("--task", probe_task, "bins | normal | geodesic");

  auto* dp = app.add_subcommand("dump", "write per-block intermediates of one test cloud");
  add_common(dp, dump_c, false);
  dp->add_option("--checkpoint", checkpoint, "X3CK parameter file")->required();
  dp->add_option("--sample", sample_index, "test-split sample index");

  auto* geo = app.add_subcommand("geodesic", "kNN-graph geodesic distances of a cloud");
  geo->add_option("--input", geo_input, "PLY or X3PC cloud")->required();
  geo->add_option("--graph-k", geo_k, "neighbors per point in the graph");
  geo->add_option("--sources", geo_sources, "comma-separated source indices (default: all)");
  geo->add_option("--out", geo_out, "output path");

  auto* fl = app.add_subcommand("flops", "analytic forward-FLOP model of one block");
  fl->add_option("--method", flops_method, "x3d | shared_mlp | rsconv | kpconv | vector_attention | scalar_attention");
  fl->add_option("--points", flops_points, "N");
  fl->add_option("--channels", flops_channels, "C");
  fl->add_option("--k", flops_k, "K");
  fl->add_option("--hidden", dims.hidden, "hidden width");
  fl->add_option("--struct-dim", dims.struct_dim, "structure feature width");
  fl->add_option("--es", flops_es, "ph | pca | lr");
  fl->add_flag("--denoise", dims.denoise, "include the denoising step (x3d)");
  fl->add_flag("--ncp", dims.ncp, "include context propagation (x3d)");
  fl->add_flag("--table", flops_table, "every method at (C,K) in {(256,16),(256,32),(512,16)}");
  fl->add_option("--out", flops_out, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const auto cfg = load(gen_c, true);
      const fs::path dir = gen_c.out.empty() ? fs::path("dataset") : fs::path(gen_c.out);
      json index{{"config", harness::to_json(cfg)["dataset"]}};
      write_split(dir / "train", harness::gen_train_split(cfg.dataset), index);
      write_split(dir / "test", harness::gen_test_split(cfg.dataset), index);
      emit(index, (dir / "dataset.json").string());
    } else if (*tr) {
      const auto cfg = load(train_c);
      const fs::path dir = train_c.out.empty() ? fs::path("run") : fs::path(train_c.out);
      nn::ParamStore params;
      json rep;
      try {
        rep = harness::run_experiment(cfg, &params);
      } catch (const NumericError& e) {
        emit({{"config", harness::to_json(cfg)}, {"aborted", e.what()}}, (dir / "report.json").string());
        throw;
      }
      fs::create_directories(dir);
      nn::save_checkpoint(dir / "model.x3ck", params);
      emit(rep, (dir / "report.json").string());
    } else if (*ev) {
      const auto cfg = load(eval_c);
      json rep = harness::evaluation_report(cfg, nn::load_checkpoint(checkpoint));
      rep["config"] = harness::to_json(cfg);
      emit(rep, eval_c.out);
    } else if (*gp) {
      const auto cfg = load(gap_c);
      const auto params = nn::load_checkpoint(checkpoint);
      const harness::Classifier model(cfg.model, static_cast<Index>(cfg.dataset.classes.size()));
      const auto test = harness::gen_test_split(cfg.dataset);
      const auto geo_all = harness::build_geometry(test, cfg.model, cfg.eval.jobs);
      emit(harness::to_json(harness::gap_report(model, params, geo_all, cfg.eval.gap_mode)), gap_c.out);
    } else if (*pr) {
      const auto cfg = load(probe_c);
      const auto params = nn::load_checkpoint(checkpoint);
      const harness::Classifier model(cfg.model, static_cast<Index>(cfg.dataset.classes.size()));
      const auto test = harness::gen_test_split(cfg.dataset);
      const auto geo_all = harness::build_geometry(test, cfg.model, cfg.eval.jobs);
      emit(harness::to_json(harness::run_probe(model, params, test, geo_all, probe::parse_task(probe_task), cfg.eval.probe)),
           probe_c.out);
    } else if (*dp) {
      const auto cfg = load(dump_c);
      const auto params = nn::load_checkpoint(checkpoint);
      const harness::Classifier model(cfg.model, static_cast<Index>(cfg.dataset.classes.size()));
      const auto test = harness::gen_test_split(cfg.dataset);
      if (sample_index < 0 || sample_index >= test.size()) throw ConfigError("dump: --sample outside the test split");
      const auto g = harness::make_geometry(test.samples[sample_index].cloud.coords, cfg.model.centers, cfg.model.k);
      harness::ModelDump dump;
      model.predict(params, g, &dump);
      const fs::path dir = dump_c.out.empty() ? fs::path("dump") : fs::path(dump_c.out);
      fs::create_directories(dir);
      json j{{"sample", sample_index}, {"label", test.samples[sample_index].label}, {"logits", matrix_json(dump.logits)}};
      json blocks = json::array();
      for (std::size_t b = 0; b < dump.block_outputs.size(); ++b) {
        json e{{"block", b}, {"output", matrix_json(dump.block_outputs[b])}};
        if (b < dump.x3d.size()) {
          const auto& x = dump.x3d[b];
          const Grouping& grp = b == 0 ? g.level0 : g.level1;
          if (x.descriptors.size() > 0) {
            std::ofstream csv(dir / ("block" + std::to_string(b) + "_descriptors.csv"));
            es::write_descriptor_csv(csv, cfg.model.es_kind, grp.nbr.centers, x.descriptors);
          }
          e["structure"] = matrix_json(x.structure);
          e["scores"] = matrix_json(x.scores);
          e["kernels"] = matrix_json(x.kernels);
          e["updated"] = matrix_json(x.updated);
        }
        if (b < dump.ihsm.size()) {
          e["relation"] = matrix_json(dump.ihsm[b].relation);
          e["kernels"] = matrix_json(dump.ihsm[b].kernels);
        }
        blocks.push_back(e);
      }
      j["blocks"] = blocks;
      emit(j, (dir / "dump.json").string());
    } else if (*geo) {
      const PointCloud cloud = read_cloud(geo_input);
      std::vector<Index> sources = parse_indices(geo_sources);
      if (sources.empty()) sources = iota_indices(cloud.size());
      const auto res = metrics::geodesic_from_sources(cloud.coords, geo_k, sources);
      json rows = json::array();
      for (Index r = 0; r < res.distances.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < res.distances.cols(); ++c) {
          const double d = res.distances(r, c);
          row.push_back(std::isfinite(d) ? json(d) : json(nullptr));
        }
        rows.push_back(row);
      }
      emit({{"graph_k", geo_k}, {"sources", sources}, {"components", res.components}, {"distances", rows}}, geo_out);
    } else if (*fl) {
      dims.es_kind = es::parse_kind(flops_es);
      auto one = [&](metrics::CostMethod m, Index c, Index k) {
        const auto e = metrics::flops_estimate(m, flops_points, c, k, dims);
        return json{{"method", metrics::to_string(m)}, {"points", e.points}, {"channels", e.channels}, {"k", e.k},
                    {"flops", e.flops}, {"gflops", e.flops * 1e-9}, {"per_point", e.per_point},
                    {"per_region", e.per_region}, {"per_neighbor", e.per_neighbor}};
      };
      if (flops_table) {
        json out = json::array();
        for (const auto m : {metrics::CostMethod::X3d, metrics::CostMethod::ScalarAttention,
                             metrics::CostMethod::VectorAttention, metrics::CostMethod::SharedMlp,
                             metrics::CostMethod::RsConv, metrics::CostMethod::KpConv})
          for (const auto [c, k] : {std::pair<Index, Index>{256, 16}, {256, 32}, {512, 16}}) out.push_back(one(m, c, k));
        emit(out, flops_out);
      } else {
        emit(one(metrics::parse_cost_method(flops_method), flops_channels, flops_k), flops_out);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
