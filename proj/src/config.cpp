#include "rasgd/config.hpp"

#include <array>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace rasgd {

ConfigError::ConfigError(const std::string& message, int line) : std::runtime_error(message), line_(line) {}

namespace {

// Presets

constexpr std::string_view kAppendixF1 = R"(name: appendix-f1
methods: [vanilla, rescaled]
problem:
  kind: quadratic
  x0: [0]
  locals:
    - {curvature: 2, center: [4]}
    - {curvature: 4, center: [-3]}
noise: {kind: exact}
timing: {model: fixed, taus: [1, 2]}
stepsize: {alpha: 0.01}
horizon: 4000
seeds: [0]
)";

constexpr std::string_view kAppendixF2 = R"(name: appendix-f2
methods: [delay_adaptive, rescaled]
problem:
  kind: quadratic
  x0: [0]
  locals:
    - {curvature: 2, center: [1]}
    - {curvature: 2, center: [-1]}
noise: {kind: exact}
timing: {model: fixed, taus: [1, 100]}
stepsize: {gamma: 0.01}
horizon: 20000
seeds: [0]
)";

constexpr std::string_view kMnistFixed = R"(name: mnist-style-fixed
methods: [rescaled, malenia, ringleader]
problem:
  kind: mlp
  hidden: 32
  normalize: true
  partition_seed: 0
  data: {source: synthetic, classes: 10, dim: 20, per_class: 200, separation: 4.0, seed: 1}
noise: {kind: minibatch, batch_size: 64}
timing: {model: fixed, taus: [1, 1, 2, 2, 4, 4, 8, 8, 16, 16]}
stepsize: {gamma: 0.1}
sweep: {grid: [0.0001, 0.001, 0.01, 0.1, 1.0, 10.0]}
horizon: 3000
seeds: [0, 1, 2]
sampling: {interval: 15}
)";

constexpr std::string_view kMnistFluctuating = R"(name: mnist-style-fluctuating
methods: [rescaled, malenia, ringleader]
problem:
  kind: mlp
  hidden: 32
  normalize: true
  partition_seed: 0
  data: {source: synthetic, classes: 10, dim: 20, per_class: 200, separation: 4.0, seed: 1}
noise: {kind: minibatch, batch_size: 64}
timing: {model: exponential, taus: [1, 1, 2, 2, 4, 4, 8, 8, 16, 16]}
stepsize: {gamma: 0.1}
sweep: {grid: [0.0001, 0.001, 0.01, 0.1, 1.0, 10.0]}
horizon: 3000
seeds: [0, 1, 2]
sampling: {interval: 15}
)";

// F_1 = x^2/2 - c x, F_2 = x^2/2 + c x with c = 10; rescaled stepsizes (0.1, 0.2).
constexpr std::string_view kCounterexample = R"(name: counterexample
methods: [rescaled]
problem:
  kind: quadratic
  x0: [0.5]
  locals:
    - {curvature: 1, center: [0], linear: [-10]}
    - {curvature: 1, center: [0], linear: [10]}
noise: {kind: exact}
timing: {model: fixed, taus: [1, 2]}
stepsize: {gamma: 0.3}
horizon: 2
seeds: [0]
sampling: {every_event: true}
)";

constexpr std::string_view kDecomposeBody = R"(methods: [rescaled]
problem:
  kind: quadratic
  x0: [3, -2, 1]
  locals:
    - {curvature: 1, center: [1, 0, 0]}
    - {curvature: [[2, 0, 0], [0, 1, 0], [0, 0, 1]], center: [0, 1, 0]}
    - {curvature: 1.5, center: [0, 0, 1]}
    - {curvature: 0.5, center: [-1, 0, 0]}
    - {curvature: [[1, 0.2, 0], [0.2, 1, 0], [0, 0, 2]], center: [0, -1, 1]}
timing: {model: fixed, taus: [1, 1, 2, 4, 8]}
stepsize: {gamma: 0.005}
horizon: 400
seeds: [0]
)";

const std::string kDecomposeExact = "name: decompose-exact\nnoise: {kind: exact}\n" + std::string(kDecomposeBody);
const std::string kDecomposeGaussian =
    "name: decompose-gaussian\nnoise: {kind: gaussian, sigma_sq: 1.0}\n" + std::string(kDecomposeBody);

struct Preset {
  std::string_view name;
  std::string_view yaml;
};

std::vector<Preset> presets() {
  return {{"appendix-f1", kAppendixF1},
          {"appendix-f2", kAppendixF2},
          {"mnist-style-fixed", kMnistFixed},
          {"mnist-style-fluctuating", kMnistFluctuating},
          {"counterexample", kCounterexample},
          {"decompose-exact", kDecomposeExact},
          {"decompose-gaussian", kDecomposeGaussian}};
}

// YAML helpers

int line_of(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  return m.is_null() ? 0 : m.line + 1;
}

[[noreturn]] void fail(const std::string& field, const std::string& what, const YAML::Node& n) {
  throw ConfigError(field + ": " + what, line_of(n));
}

template <class T>
T scalar(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) fail(field, "expected a scalar", n);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(field, "invalid value '" + n.Scalar() + "'", n);
  }
}

void check_keys(const YAML::Node& map, const std::string& field, std::initializer_list<std::string_view> allowed) {
  if (!map.IsMap()) fail(field, "expected a mapping", map);
  for (const auto& kv : map) {
    const std::string key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) fail(field.empty() ? key : field + "." + key, "unknown key", kv.first);
  }
}

std::vector<double> doubles(const YAML::Node& n, const std::string& field) {
  std::vector<double> out;
  if (n.IsScalar()) {
    out.push_back(scalar<double>(n, field));
    return out;
  }
  if (!n.IsSequence()) fail(field, "expected a list of numbers", n);
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<double>(n[i], field));
  return out;
}

Vector vec(const YAML::Node& n, const std::string& field) {
  const auto v = doubles(n, field);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

QuadraticSpec parse_local(const YAML::Node& n, const std::string& field) {
  check_keys(n, field, {"curvature", "center", "linear"});
  if (!n["center"]) fail(field + ".center", "required", n);
  const Vector center = vec(n["center"], field + ".center");
  const auto d = center.size();
  Vector linear;
  if (n["linear"]) {
    linear = vec(n["linear"], field + ".linear");
    if (linear.size() != d) fail(field + ".linear", "dimension mismatch", n["linear"]);
  }
  const YAML::Node c = n["curvature"];
  if (!c) fail(field + ".curvature", "required", n);
  if (c.IsScalar()) return QuadraticSpec::scalar(scalar<double>(c, field + ".curvature"), center, linear);
  if (!c.IsSequence() || static_cast<Eigen::Index>(c.size()) != d) {
    fail(field + ".curvature", "expected a scalar or a " + std::to_string(d) + "x" + std::to_string(d) + " matrix", c);
  }
  Matrix H(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const auto row = doubles(c[static_cast<std::size_t>(r)], field + ".curvature");
    if (static_cast<Eigen::Index>(row.size()) != d) fail(field + ".curvature", "row length mismatch", c);
    for (Eigen::Index k = 0; k < d; ++k) H(r, k) = row[static_cast<std::size_t>(k)];
  }
  if (!H.isApprox(H.transpose(), 1e-12)) fail(field + ".curvature", "matrix must be symmetric", c);
  return QuadraticSpec{H, center, linear};
}

std::variant<QuadraticProblem, MlpProblem> parse_problem(const YAML::Node& n) {
  if (!n.IsMap()) fail("problem", "expected a mapping", n);
  const std::string kind = n["kind"] ? scalar<std::string>(n["kind"], "problem.kind") : "";
  if (kind == "quadratic") {
    check_keys(n, "problem", {"kind", "x0", "locals"});
    QuadraticProblem q;
    if (!n["locals"] || !n["locals"].IsSequence()) fail("problem.locals", "expected a list", n);
    for (std::size_t i = 0; i < n["locals"].size(); ++i) {
      q.locals.push_back(parse_local(n["locals"][i], "problem.locals[" + std::to_string(i) + "]"));
    }
    if (n["x0"]) {
      q.x0 = vec(n["x0"], "problem.x0");
    } else if (!q.locals.empty()) {
      q.x0 = Vector::Zero(q.locals.front().center.size());
    }
    return q;
  }
  if (kind == "mlp") {
    check_keys(n, "problem", {"kind", "hidden", "normalize", "normalization", "partition_seed", "data"});
    MlpProblem m;
    if (n["hidden"]) m.hidden = scalar<std::size_t>(n["hidden"], "problem.hidden");
    if (n["normalize"]) m.normalize = scalar<bool>(n["normalize"], "problem.normalize");
    if (const auto z = n["normalization"]) {
      check_keys(z, "problem.normalization", {"mean", "stddev"});
      Normalization norm;
      norm.mean = scalar<double>(z["mean"], "problem.normalization.mean");
      norm.stddev = scalar<double>(z["stddev"], "problem.normalization.stddev");
      if (!(norm.stddev > 0.0)) fail("problem.normalization.stddev", "must be positive", z["stddev"]);
      m.normalization = norm;
    }
    if (n["partition_seed"]) m.partition_seed = scalar<std::uint64_t>(n["partition_seed"], "problem.partition_seed");
    const YAML::Node d = n["data"];
    if (!d || !d.IsMap()) fail("problem.data", "required mapping", n);
    const std::string source = d["source"] ? scalar<std::string>(d["source"], "problem.data.source") : "";
    if (source == "synthetic") {
      check_keys(d, "problem.data", {"source", "classes", "dim", "per_class", "separation", "seed"});
      SyntheticData s;
      if (d["classes"]) s.classes = scalar<int>(d["classes"], "problem.data.classes");
      if (d["dim"]) s.dim = scalar<std::size_t>(d["dim"], "problem.data.dim");
      if (d["per_class"]) s.per_class = scalar<std::size_t>(d["per_class"], "problem.data.per_class");
      if (d["separation"]) s.separation = scalar<double>(d["separation"], "problem.data.separation");
      if (d["seed"]) s.seed = scalar<std::uint64_t>(d["seed"], "problem.data.seed");
      m.data = s;
    } else if (source == "idx") {
      check_keys(d, "problem.data", {"source", "images", "labels"});
      if (!d["images"] || !d["labels"]) fail("problem.data", "idx data needs images and labels", d);
      m.data = IdxData{scalar<std::string>(d["images"], "problem.data.images"),
                       scalar<std::string>(d["labels"], "problem.data.labels")};
    } else {
      fail("problem.data.source", "expected synthetic or idx", d);
    }
    return m;
  }
  fail("problem.kind", "expected quadratic or mlp", n["kind"] ? n["kind"] : n);
}

NoiseModel parse_noise(const YAML::Node& n) {
  check_keys(n, "noise", {"kind", "sigma_sq", "batch_size"});
  const std::string kind = n["kind"] ? scalar<std::string>(n["kind"], "noise.kind") : "";
  if (kind == "exact") return ExactNoise{};
  if (kind == "gaussian") {
    if (!n["sigma_sq"]) fail("noise.sigma_sq", "required for gaussian noise", n);
    const double s = scalar<double>(n["sigma_sq"], "noise.sigma_sq");
    if (!(s >= 0.0)) fail("noise.sigma_sq", "must be nonnegative", n["sigma_sq"]);
    return GaussianNoise{s};
  }
  if (kind == "minibatch") {
    MinibatchNoise b;
    if (n["batch_size"]) b.batch_size = scalar<std::size_t>(n["batch_size"], "noise.batch_size");
    return b;
  }
  fail("noise.kind", "expected exact, gaussian or minibatch", n);
}

std::vector<std::uint64_t> parse_seeds(const YAML::Node& n) {
  std::vector<std::uint64_t> out;
  if (n.IsScalar()) {
    out.push_back(scalar<std::uint64_t>(n, "seeds"));
  } else if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<std::uint64_t>(n[i], "seeds"));
  } else {
    fail("seeds", "expected a list of nonnegative integers", n);
  }
  return out;
}

ExperimentConfig interpret(const YAML::Node& root) {
  if (!root.IsMap()) throw ConfigError("expected a mapping at the top level", line_of(root));
  check_keys(root, "",
             {"name", "methods", "problem", "noise", "timing", "stepsize", "sweep", "horizon", "seeds", "sampling",
              "output"});
  ExperimentConfig c;
  if (root["name"]) c.name = scalar<std::string>(root["name"], "name");

  const YAML::Node methods = root["methods"];
  if (!methods) fail("methods", "required", root);
  const auto add_method = [&](const YAML::Node& m) {
    const auto name = scalar<std::string>(m, "methods");
    try {
      c.methods.push_back(parse_method(name));
    } catch (const std::invalid_argument& e) {
      fail("methods", e.what(), m);
    }
  };
  if (methods.IsSequence()) {
    for (std::size_t i = 0; i < methods.size(); ++i) add_method(methods[i]);
  } else {
    add_method(methods);
  }

  if (!root["problem"]) fail("problem", "required", root);
  c.problem = parse_problem(root["problem"]);
  if (root["noise"]) c.noise = parse_noise(root["noise"]);

  const YAML::Node timing = root["timing"];
  if (!timing) fail("timing", "required", root);
  check_keys(timing, "timing", {"model", "taus", "harmonize"});
  if (timing["model"]) {
    const auto model = scalar<std::string>(timing["model"], "timing.model");
    if (model == "fixed") {
      c.timing = TimingKind::Fixed;
    } else if (model == "exponential") {
      c.timing = TimingKind::Exponential;
    } else {
      fail("timing.model", "expected fixed or exponential", timing["model"]);
    }
  }
  if (!timing["taus"]) fail("timing.taus", "required", timing);
  c.taus = doubles(timing["taus"], "timing.taus");
  if (timing["harmonize"]) c.harmonize = scalar<bool>(timing["harmonize"], "timing.harmonize");

  if (const YAML::Node s = root["stepsize"]) {
    check_keys(s, "stepsize", {"gamma", "alpha"});
    if (s["gamma"] && s["alpha"]) fail("stepsize", "give either gamma or alpha", s);
    if (s["gamma"]) {
      c.stepsize_mode = StepsizeMode::Gamma;
      c.stepsize = scalar<double>(s["gamma"], "stepsize.gamma");
    } else if (s["alpha"]) {
      c.stepsize_mode = StepsizeMode::Alpha;
      c.stepsize = scalar<double>(s["alpha"], "stepsize.alpha");
    }
  }
  if (const YAML::Node s = root["sweep"]) {
    check_keys(s, "sweep", {"grid"});
    if (s["grid"]) c.grid = doubles(s["grid"], "sweep.grid");
  }
  if (!root["horizon"]) fail("horizon", "required", root);
  c.horizon = scalar<double>(root["horizon"], "horizon");
  if (root["seeds"]) c.seeds = parse_seeds(root["seeds"]);
  if (const YAML::Node s = root["sampling"]) {
    check_keys(s, "sampling", {"interval", "every_event"});
    if (s["interval"]) c.sample_interval = scalar<double>(s["interval"], "sampling.interval");
    if (s["every_event"]) c.sample_every_event = scalar<bool>(s["every_event"], "sampling.every_event");
  }
  if (const YAML::Node o = root["output"]) {
    check_keys(o, "output", {"dir", "grid_size"});
    if (o["dir"]) c.output_dir = scalar<std::string>(o["dir"], "output.dir");
    if (o["grid_size"]) c.grid_size = scalar<std::size_t>(o["grid_size"], "output.grid_size");
  }
  return c;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + path + "': empty key");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("override: empty key");
  return parts;
}

bool is_index(const std::string& s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

void apply_override(YAML::Node& root, const Override& o) {
  YAML::Node value;
  try {
    value = YAML::Load(o.second);
  } catch (const YAML::Exception& e) {
    throw ConfigError("override " + o.first + ": " + e.msg);
  }
  if (o.first == "stepsize.gamma" || o.first == "stepsize.alpha") {
    YAML::Node s(YAML::NodeType::Map);
    s[o.first.substr(9)] = value;
    root["stepsize"] = s;
    return;
  }
  const auto parts = split_path(o.first);
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next;
    if (cur.IsSequence() && is_index(parts[i])) {
      const auto k = std::stoul(parts[i]);
      if (k >= cur.size()) throw ConfigError("override " + o.first + ": index out of range");
      next.reset(cur[k]);
    } else {
      if (!cur.IsMap() && !cur.IsNull()) throw ConfigError("override " + o.first + ": '" + parts[i] + "' is not a mapping");
      if (!cur[parts[i]].IsDefined() || cur[parts[i]].IsNull()) cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next.reset(cur[parts[i]]);
    }
    cur.reset(next);
  }
  const std::string& last = parts.back();
  if (cur.IsSequence() && is_index(last)) {
    const auto k = std::stoul(last);
    if (k >= cur.size()) throw ConfigError("override " + o.first + ": index out of range");
    cur[k] = value;
  } else {
    if (!cur.IsMap() && !cur.IsNull()) throw ConfigError("override " + o.first + ": parent is not a mapping");
    cur[last] = value;
  }
}

// Line of the node addressed by the field prefix of a validation message.
int field_line(const YAML::Node& root, const std::string& message) {
  const auto colon = message.find(':');
  if (colon == std::string::npos) return 0;
  const std::string field = message.substr(0, colon);
  if (field.find(' ') != std::string::npos) return 0;
  YAML::Node cur = root;
  int line = line_of(root);
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!cur.IsMap() || !cur[part]) break;
    YAML::Node next;
    next.reset(cur[part]);
    cur.reset(next);
    line = line_of(cur) ? line_of(cur) : line;
  }
  return line;
}

std::string located(std::string_view source, int line, const std::string& what) {
  std::string out(source);
  if (line > 0) out += ":" + std::to_string(line);
  return out + ": " + what;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view source, const std::vector<Override>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    const int line = e.mark.is_null() ? 0 : e.mark.line + 1;
    throw ConfigError(located(source, line, "malformed YAML: " + e.msg), line);
  }
  ExperimentConfig c;
  try {
    if (!root.IsMap()) throw ConfigError("expected a mapping at the top level", line_of(root));
    for (const auto& o : overrides) apply_override(root, o);
    c = interpret(root);
    for (const auto& o : overrides) c.overrides[o.first] = o.second;
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(located(source, e.line(), e.what()), e.line());
  } catch (const std::invalid_argument& e) {
    const int line = field_line(root, e.what());
    throw ConfigError(located(source, line, e.what()), line);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), overrides);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.emplace_back(p.name);
  return out;
}

std::optional<std::string> preset_yaml(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return std::string(p.yaml);
  }
  return std::nullopt;
}

ExperimentConfig resolve_config(std::string_view name_or_path, const std::vector<Override>& overrides) {
  if (auto yaml = preset_yaml(name_or_path)) return parse_config(*yaml, name_or_path, overrides);
  return load_config(std::filesystem::path(name_or_path), overrides);
}

}  // namespace rasgd
