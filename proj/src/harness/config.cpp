#include "x3d/harness/config.hpp"

#include "x3d/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace x3d::harness {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <class T>
  void get(const std::string& section, const std::string& key, T& value) {
    used_[section].insert(key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true" || *v == "on" || *v == "1" || *v == "yes") value = true;
        else if (*v == "false" || *v == "off" || *v == "0" || *v == "no") value = false;
        else throw std::invalid_argument("bool");
      } else if constexpr (std::is_same_v<T, std::string>) {
        value = *v;
      } else {
        std::istringstream is(*v);
        T parsed{};
        is >> parsed;
        if (is.fail() || !is.eof()) throw std::invalid_argument("number");
        value = parsed;
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: bad value '" + *v + "' for " + section + "." + key);
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      const auto it = used_.find(section);
      if (it == used_.end()) throw ConfigError("config: unknown section [" + section + "]");
      for (const auto& kv : body)
        if (!it->second.count(kv.first)) throw ConfigError("config: unknown key " + section + "." + kv.first);
    }
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, std::set<std::string>> used_;
};

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.classes.size() < 2) throw ConfigError("config: dataset.classes needs at least two entries");
  for (const auto& c : dataset.classes) parse_shape(c);
  if (dataset.points < 1 || dataset.train_count < 1 || dataset.test_count < 1)
    throw ConfigError("config: dataset counts must be >= 1");
  if (dataset.noise < 0.0) throw ConfigError("config: dataset.noise must be >= 0");
  if (model.centers > dataset.points) throw ConfigError("config: model.centers exceeds dataset.points");
  if (model.k > dataset.points) throw ConfigError("config: model.k exceeds dataset.points");
  model.validate();
  if (train.epochs < 0 || train.batch < 1) throw ConfigError("config: train.epochs >= 0 and train.batch >= 1");
  if (train.lr < 0.0 || train.momentum < 0.0 || train.momentum >= 1.0)
    throw ConfigError("config: train.lr >= 0 and 0 <= train.momentum < 1 required");
  if (eval.jobs < 1) throw ConfigError("config: eval.jobs must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Reader r(tree);
  ExperimentConfig c;

  std::string classes, rotation = std::string(to_string(c.dataset.rotation));
  r.get("dataset", "classes", classes);
  if (!classes.empty()) c.dataset.classes = split_list(classes);
  r.get("dataset", "points", c.dataset.points);
  r.get("dataset", "noise", c.dataset.noise);
  r.get("dataset", "train", c.dataset.train_count);
  r.get("dataset", "test", c.dataset.test_count);
  r.get("dataset", "seed", c.dataset.seed);
  r.get("dataset", "rotation", rotation);
  c.dataset.rotation = parse_rotation(rotation);

  std::string es_kind(es::to_string(c.model.es_kind)), aggregation = "max", relation = "pnpp";
  r.get("model", "block", c.model.block);
  r.get("model", "es", es_kind);
  c.model.es_kind = es::parse_kind(es_kind);
  r.get("model", "implicit_structure", c.model.implicit_structure);
  r.get("model", "struct_dim", c.model.struct_dim);
  r.get("model", "channels", c.model.channels);
  r.get("model", "hidden", c.model.hidden);
  r.get("model", "blocks", c.model.blocks);
  r.get("model", "k", c.model.k);
  r.get("model", "centers", c.model.centers);
  r.get("model", "ncp", c.model.ncp);
  r.get("model", "denoise", c.model.denoise);
  r.get("model", "normalize", c.model.normalize);
  r.get("model", "aggregation", aggregation);
  if (aggregation == "max") c.model.aggregation = layer::Aggregation::Max;
  else if (aggregation == "mean") c.model.aggregation = layer::Aggregation::Mean;
  else throw ConfigError("config: model.aggregation must be max or mean");
  r.get("model", "relation", relation);
  c.model.relation = ihsm::parse_relation(relation);

  std::string schedule = "cosine";
  r.get("train", "epochs", c.train.epochs);
  r.get("train", "lr", c.train.lr);
  r.get("train", "momentum", c.train.momentum);
  r.get("train", "batch", c.train.batch);
  r.get("train", "seed", c.train.seed);
  r.get("train", "schedule", schedule);
  if (schedule != "cosine" && schedule != "constant") throw ConfigError("config: train.schedule must be cosine or constant");
  c.train.cosine = schedule == "cosine";

  std::string transforms, probes, gap_mode = "euclidean";
  r.get("eval", "transforms", transforms);
  for (const auto& t : split_list(transforms)) c.eval.transforms.push_back(Transform::parse(t));
  r.get("eval", "gap", c.eval.gap);
  r.get("eval", "gap_mode", gap_mode);
  c.eval.gap_mode = metrics::parse_gap_mode(gap_mode);
  r.get("eval", "probes", probes);
  for (const auto& p : split_list(probes)) c.eval.probes.push_back(probe::parse_task(p));
  r.get("eval", "probe_clouds", c.eval.probe.clouds);
  r.get("eval", "probe_epochs", c.eval.probe.options.epochs);
  r.get("eval", "probe_bins", c.eval.probe.options.bins);
  r.get("eval", "jobs", c.eval.jobs);

  r.reject_unknown();
  c.eval.probe.options.seed = c.train.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json transforms = nlohmann::json::array(), probes = nlohmann::json::array();
  for (const auto& t : c.eval.transforms) transforms.push_back(t.name());
  for (const auto& p : c.eval.probes) probes.push_back(probe::to_string(p));
  const bool x3d = c.model.is_x3d();
  return {
      {"dataset",
       {{"classes", c.dataset.classes},
        {"points", c.dataset.points},
        {"noise", c.dataset.noise},
        {"train", c.dataset.train_count},
        {"test", c.dataset.test_count},
        {"seed", c.dataset.seed},
        {"rotation", to_string(c.dataset.rotation)}}},
      {"model",
       {{"block", c.model.block},
        {"es", x3d ? std::string(es::to_string(c.model.es_kind)) : "none"},
        {"implicit_structure", c.model.implicit_structure},
        {"implicit_structure_realization", "max-pooled MLP over offsets"},
        {"struct_dim", c.model.struct_dim},
        {"channels", c.model.channels},
        {"hidden", c.model.hidden},
        {"blocks", c.model.blocks},
        {"k", c.model.k},
        {"centers", c.model.centers},
        {"ncp", c.model.ncp},
        {"denoise", c.model.denoise},
        {"normalize", c.model.normalize},
        {"aggregation", c.model.aggregation == layer::Aggregation::Max ? "max" : "mean"},
        {"relation", ihsm::to_string(c.model.relation)},
        {"attention_realization", "per-channel softmax over neighbors"},
        {"stacking", "standalone blocks (no backbone integration)"}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"lr", c.train.lr},
        {"momentum", c.train.momentum},
        {"batch", c.train.batch},
        {"seed", c.train.seed},
        {"schedule", c.train.cosine ? "cosine" : "constant"}}},
      {"eval",
       {{"transforms", transforms},
        {"gap", c.eval.gap},
        {"gap_mode", metrics::to_string(c.eval.gap_mode)},
        {"probes", probes},
        {"probe_clouds", c.eval.probe.clouds},
        {"jobs", c.eval.jobs}}}};
}

nlohmann::json evaluation_report(const ExperimentConfig& c, const nn::ParamStore& params) {
  const Dataset train = gen_train_split(c.dataset);
  const Dataset test = gen_test_split(c.dataset);
  const Classifier model(c.model, static_cast<Index>(c.dataset.classes.size()));
  const auto train_geo = build_geometry(train, c.model, c.eval.jobs);
  const auto test_geo = build_geometry(test, c.model, c.eval.jobs);
  nlohmann::json rep;
  const auto ev_train = evaluate(model, params, train, train_geo, c.eval.jobs);
  const auto ev_test = evaluate(model, params, test, test_geo, c.eval.jobs);
  rep["train_eval"] = to_json(ev_train);
  rep["test_eval"] = to_json(ev_test);
  if (c.eval.gap) rep["gap"] = to_json(gap_report(model, params, test_geo, c.eval.gap_mode));
  if (!c.eval.probes.empty()) {
    nlohmann::json probes = nlohmann::json::array();
    for (const auto task : c.eval.probes) probes.push_back(to_json(run_probe(model, params, test, test_geo, task, c.eval.probe)));
    rep["probes"] = probes;
  }
  if (!c.eval.transforms.empty()) {
    nlohmann::json rob = nlohmann::json::array();
    for (const auto& e : robustness(model, params, test, ev_test.accuracy, c.eval.transforms, c.eval.jobs))
      rob.push_back({{"transform", e.transform.name()}, {"accuracy", e.accuracy}, {"drop", e.drop}});
    rep["robustness"] = rob;
  }
  return rep;
}

nlohmann::json run_experiment(const ExperimentConfig& c, nn::ParamStore* params_out) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  const Dataset train_set = gen_train_split(c.dataset);
  const Classifier model(c.model, static_cast<Index>(c.dataset.classes.size()));
  const auto geo = build_geometry(train_set, c.model, c.eval.jobs);
  nlohmann::json rep;
  rep["config"] = to_json(c);
  TrainResult tr = train(model, train_set, geo, c.train);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : tr.epochs) epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}});
  rep["epochs"] = epochs;
  rep["parameters"] = tr.params.size();
  const auto ev = evaluation_report(c, tr.params);
  for (auto it = ev.begin(); it != ev.end(); ++it) rep[it.key()] = it.value();
  rep["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (params_out) *params_out = std::move(tr.params);
  return rep;
}

}  // namespace x3d::harness
