#include "run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>

#include "kkr/errors.hpp"

namespace kkr::cli {
namespace {

using nlohmann::json;

// Read access to one JSON object that rejects keys outside `allowed`.
class Section {
 public:
  Section(const json& doc, std::string name, std::initializer_list<const char*> allowed)
      : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    doc_ = &doc;
    for (const auto& [key, value] : doc.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        throw ConfigError("unknown key '" + key + "' in section '" + name_ + "'");
      }
    }
  }

  bool has(const char* key) const { return doc_ && doc_->contains(key) && !doc_->at(key).is_null(); }

  const json& raw(const char* key) const { return doc_->at(key); }

  template <class T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    try {
      out = doc_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T>
  void read(const char* key, std::optional<T>& out) const {
    if (!has(key)) return;
    T value{};
    read(key, value);
    out = value;
  }

  void read_count(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    const json& v = doc_->at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where(key) + " must be an integer >= 0");
    out = v.get<std::size_t>();
  }

  void read_seed(const char* key, std::optional<std::uint64_t>& out) const {
    if (!has(key)) return;
    const json& v = doc_->at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(where(key) + " must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void read_grid(const char* key, std::vector<std::size_t>& out) const {
    if (!has(key)) return;
    const json& v = doc_->at(key);
    if (!v.is_array()) throw ConfigError(where(key) + " must be an array of positive integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long long>() < 1) {
        throw ConfigError(where(key) + " must be an array of positive integers");
      }
      out.push_back(e.get<std::size_t>());
    }
  }

  std::string where(const char* key) const { return name_ + "." + key; }

 private:
  std::string name_;
  const json* doc_ = nullptr;
};

const json& section_of(const json& doc, const char* name) {
  static const json null;
  return doc.contains(name) ? doc.at(name) : null;
}

template <class F>
auto translate(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const kkr::Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

State vector_of(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a non-empty array of numbers");
  State out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number()) throw ConfigError(where + " must be a non-empty array of numbers");
    out[static_cast<Eigen::Index>(k)] = v[k].get<double>();
  }
  return out;
}

json vector_json(const State& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void parse_system(const json& doc, RunConfig& cfg) {
  const Section s(doc, "system", {"kind", "params", "init_box", "observable"});
  std::string kind = "bistable";
  s.read("kind", kind);
  if (kind == "bistable") {
    cfg.system = SystemSpec::bistable();
  } else if (kind == "van_der_pol") {
    cfg.system = SystemSpec::van_der_pol();
  } else {
    throw ConfigError("system.kind must be 'bistable' or 'van_der_pol', got '" + kind + "'");
  }
  if (s.has("params")) {
    const json& p = s.raw("params");
    if (!p.is_object()) throw ConfigError("system.params must be an object");
    for (const auto& [name, value] : p.items()) {
      if (!cfg.system.params.contains(name)) {
        throw ConfigError("unknown parameter '" + name + "' for system '" + kind + "'");
      }
      if (!value.is_number()) throw ConfigError("system.params." + name + " must be a number");
      cfg.system.params[name] = value.get<double>();
    }
  }
  translate("system", [&] { cfg.system.validate(); });

  const std::size_t d = cfg.system.state_dim;
  cfg.box = Box::cube(d, -1.0, 1.0);
  if (s.has("init_box")) {
    const Section b(s.raw("init_box"), "system.init_box", {"lower", "upper"});
    if (b.has("lower")) cfg.box.lower = vector_of(b.raw("lower"), "system.init_box.lower");
    if (b.has("upper")) cfg.box.upper = vector_of(b.raw("upper"), "system.init_box.upper");
    if (cfg.box.lower.size() != static_cast<Eigen::Index>(d) || cfg.box.upper.size() != static_cast<Eigen::Index>(d)) {
      throw ConfigError("system.init_box bounds must have " + std::to_string(d) + " entries");
    }
    if ((cfg.box.lower.array() > cfg.box.upper.array()).any()) {
      throw ConfigError("system.init_box.lower must not exceed upper");
    }
  }

  cfg.observable = ObservableSpec::coordinate(0);
  if (s.has("observable")) {
    const Section o(s.raw("observable"), "system.observable", {"kind", "index"});
    std::string okind = "coordinate";
    o.read("kind", okind);
    if (okind == "coordinate") {
      std::size_t index = 0;
      o.read_count("index", index);
      cfg.observable = ObservableSpec::coordinate(index);
    } else if (okind == "norm") {
      if (o.has("index")) throw ConfigError("system.observable.index only applies to 'coordinate'");
      cfg.observable = ObservableSpec::norm();
    } else {
      throw ConfigError("system.observable.kind must be 'coordinate' or 'norm'");
    }
  }
  translate("system.observable", [&] { cfg.observable.validate(d); });
}

void parse_data(const json& doc, RunConfig& cfg) {
  const Section s(doc, "data", {"N", "dt", "H", "seed", "substeps"});
  s.read_count("N", cfg.data.trajectories);
  s.read("dt", cfg.data.dt);
  s.read_count("H", cfg.data.horizon);
  s.read_count("substeps", cfg.data.substeps);
  s.read_seed("seed", cfg.data.seed);
  if (cfg.data.trajectories < 1) throw ConfigError("data.N must be at least 1");
  if (!(cfg.data.dt > 0.0) || !std::isfinite(cfg.data.dt)) throw ConfigError("data.dt must be positive");
  if (cfg.data.horizon < 1) throw ConfigError("data.H must be at least 1");
  if (cfg.data.substeps < 1) throw ConfigError("data.substeps must be at least 1");
}

void parse_kernel(const json& doc, RunConfig& cfg) {
  const Section s(doc, "kernel", {"kind", "length_scale", "normalized"});
  std::string kind = "rbf";
  s.read("kind", kind);
  if (kind == "rbf") {
    cfg.base.kind = BaseKernelKind::RBF;
  } else if (kind == "linear") {
    cfg.base.kind = BaseKernelKind::Linear;
  } else {
    throw ConfigError("kernel.kind must be 'rbf' or 'linear'");
  }
  s.read("length_scale", cfg.base.length_scale);
  bool normalized = true;
  s.read("normalized", normalized);
  cfg.kkr.weights = normalized ? WeightMode::Normalized : WeightMode::Literal;
  translate("kernel", [&] { cfg.base.validate(); });
}

void parse_spectrum(const json& doc, RunConfig& cfg) {
  const Section s(doc, "spectrum", {"sampler", "D", "seed", "conjugate_closed", "radius"});
  if (s.has("sampler")) {
    std::string name;
    s.read("sampler", name);
    cfg.spectrum.sampler = translate("spectrum.sampler", [&] { return sampler_from_string(name); });
  }
  s.read_count("D", cfg.spectrum.count);
  s.read_seed("seed", cfg.spectrum.seed);
  s.read("conjugate_closed", cfg.spectrum.conjugate_closed);
  s.read("radius", cfg.spectrum.radius);
  if (cfg.spectrum.count < 1) throw ConfigError("spectrum.D must be at least 1");
  if (!(cfg.spectrum.radius > 0.0) || cfg.spectrum.radius > 1.0) throw ConfigError("spectrum.radius must lie in (0, 1]");
  if (cfg.spectrum.conjugate_closed && cfg.spectrum.sampler == SpectrumSampler::UniformDisk) {
    throw ConfigError("spectrum.conjugate_closed requires the 'conjugate_pairs' or 'structured' sampler");
  }
}

void parse_kkr(const json& doc, RunConfig& cfg) {
  const Section s(doc, "kkr", {"gamma", "jitter", "jitter_rule", "realify"});
  s.read("gamma", cfg.kkr.gamma);
  s.read("jitter", cfg.kkr.jitter);
  if (s.has("jitter_rule")) {
    std::string rule;
    s.read("jitter_rule", rule);
    if (rule == "fixed") {
      cfg.kkr.jitter_rule = JitterRule::Fixed;
    } else if (rule == "leave_one_out") {
      cfg.kkr.jitter_rule = JitterRule::LeaveOneOut;
    } else {
      throw ConfigError("kkr.jitter_rule must be 'fixed' or 'leave_one_out'");
    }
  }
  if (s.has("realify")) {
    std::string mode;
    s.read("realify", mode);
    if (mode == "real_part") {
      cfg.kkr.realify = Realify::RealPart;
    } else if (mode == "require_conjugate_closed") {
      cfg.kkr.realify = Realify::RequireConjugateClosed;
    } else {
      throw ConfigError("kkr.realify must be 'real_part' or 'require_conjugate_closed'");
    }
  }
  translate("kkr", [&] { cfg.kkr.validate(); });
}

void parse_edmd(const json& doc, RunConfig& cfg) {
  const Section s(doc, "edmd", {"rank", "ridge"});
  s.read_count("rank", cfg.edmd.rank);
  s.read("ridge", cfg.edmd.ridge);
  if (cfg.edmd.rank < 1) throw ConfigError("edmd.rank must be at least 1");
  if (!(cfg.edmd.ridge >= 0.0) || !std::isfinite(cfg.edmd.ridge)) throw ConfigError("edmd.ridge must be >= 0");
}

void parse_experiment(const json& doc, RunConfig& cfg) {
  const Section s(doc, "experiment", {"axis", "grid", "repetitions", "n_test", "master_seed", "methods", "metric"});
  auto& e = cfg.experiment;
  if (s.has("axis")) {
    std::string axis;
    s.read("axis", axis);
    e.axis = translate("experiment.axis", [&] { return axis_from_string(axis); });
  }
  s.read_grid("grid", e.grid);
  s.read_count("repetitions", e.repetitions);
  s.read_count("n_test", e.test_trajectories);
  s.read_seed("master_seed", e.master_seed);
  if (s.has("methods")) {
    std::vector<std::string> names;
    s.read("methods", names);
    e.methods.clear();
    for (const auto& n : names) e.methods.push_back(translate("experiment.methods", [&] { return method_from_string(n); }));
  }
  if (s.has("metric")) {
    std::string metric;
    s.read("metric", metric);
    e.metric = translate("experiment.metric", [&] { return metric_from_string(metric); });
  }
  if (e.test_trajectories < 1) throw ConfigError("experiment.n_test must be at least 1");
}

void parse_convergence(const json& doc, RunConfig& cfg) {
  const Section s(doc, "convergence", {"grid", "baseline", "points", "runs", "seed"});
  auto& c = cfg.convergence;
  s.read_grid("grid", c.grid);
  s.read_count("baseline", c.baseline);
  s.read_count("points", c.points);
  s.read_count("runs", c.runs);
  s.read_seed("seed", c.seed);
}

void parse_io(const json& doc, RunConfig& cfg) {
  const Section s(doc, "io", {"out_dir"});
  std::string out = cfg.out_dir.string();
  s.read("out_dir", out);
  cfg.out_dir = out;
}

json optional_seed(const std::optional<std::uint64_t>& seed) { return seed ? json(*seed) : json(nullptr); }

std::string system_kind(const SystemSpec& s) { return s.kind == SystemKind::Bistable ? "bistable" : "van_der_pol"; }

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("run configuration must be a JSON object");
  static const std::initializer_list<const char*> sections = {"system", "data",       "kernel",      "spectrum",
                                                               "kkr",    "edmd",       "experiment",  "convergence",
                                                               "io"};
  for (const auto& [key, value] : doc.items()) {
    if (std::none_of(sections.begin(), sections.end(), [&](const char* s) { return key == s; })) {
      throw ConfigError("unknown section '" + key + "'");
    }
  }
  RunConfig cfg;
  parse_system(section_of(doc, "system"), cfg);
  parse_data(section_of(doc, "data"), cfg);
  parse_kernel(section_of(doc, "kernel"), cfg);
  parse_spectrum(section_of(doc, "spectrum"), cfg);
  parse_kkr(section_of(doc, "kkr"), cfg);
  parse_edmd(section_of(doc, "edmd"), cfg);
  parse_experiment(section_of(doc, "experiment"), cfg);
  parse_convergence(section_of(doc, "convergence"), cfg);
  parse_io(section_of(doc, "io"), cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed, const char* key) {
  if (!seed) throw ConfigError(std::string(key) + " must be set explicitly");
  return *seed;
}

json RunConfig::resolved() const {
  json params = json::object();
  for (const auto& [name, value] : system.params) params[name] = value;
  const json obs = observable.kind == ObservableKind::Norm
                       ? json{{"kind", "norm"}}
                       : json{{"kind", "coordinate"}, {"index", observable.index}};
  std::vector<std::string> methods;
  for (const Method m : experiment.methods) methods.push_back(to_string(m));
  return {
      {"system",
       {{"kind", system_kind(system)},
        {"params", params},
        {"init_box", {{"lower", vector_json(box.lower)}, {"upper", vector_json(box.upper)}}},
        {"observable", obs}}},
      {"data",
       {{"N", data.trajectories},
        {"dt", data.dt},
        {"H", data.horizon},
        {"substeps", data.substeps},
        {"seed", optional_seed(data.seed)}}},
      {"kernel",
       {{"kind", base.kind == BaseKernelKind::RBF ? "rbf" : "linear"},
        {"length_scale", base.length_scale},
        {"normalized", kkr.weights == WeightMode::Normalized}}},
      {"spectrum",
       {{"sampler", to_string(spectrum.sampler)},
        {"D", spectrum.count},
        {"seed", optional_seed(spectrum.seed)},
        {"conjugate_closed", spectrum.conjugate_closed},
        {"radius", spectrum.radius}}},
      {"kkr",
       {{"gamma", kkr.gamma},
        {"jitter", kkr.jitter ? json(*kkr.jitter) : json(nullptr)},
        {"jitter_rule", kkr.jitter_rule == JitterRule::Fixed ? "fixed" : "leave_one_out"},
        {"realify", kkr.realify == Realify::RealPart ? "real_part" : "require_conjugate_closed"}}},
      {"edmd", {{"rank", edmd.rank}, {"ridge", edmd.ridge}}},
      {"experiment",
       {{"axis", to_string(experiment.axis)},
        {"grid", experiment.grid},
        {"repetitions", experiment.repetitions},
        {"n_test", experiment.test_trajectories},
        {"master_seed", optional_seed(experiment.master_seed)},
        {"methods", methods},
        {"metric", experiment.metric ? json(to_string(*experiment.metric)) : json(nullptr)}}},
      {"convergence",
       {{"grid", convergence.grid},
        {"baseline", convergence.baseline},
        {"points", convergence.points},
        {"runs", convergence.runs},
        {"seed", optional_seed(convergence.seed)}}},
      {"io", {{"out_dir", out_dir.string()}}},
  };
}

}  // namespace kkr::cli
