#include "rfl/experiment.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace rfl {
namespace {

std::string where(const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.line < 0) return "";
  return fmt::format(" (line {})", mark.line + 1);
}

// Walks one mapping, remembering which keys were consumed so that leftovers
// can be reported as unknown fields.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(fmt::format("{}: expected a mapping{}", label(), where(node_)));
    }
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const YAML::Node value = node_[key];
    try {
      return value.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("{}: invalid value{}", field(key), where(value)));
    }
  }

  template <typename T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const YAML::Node value = node_[key];
    try {
      if (value.IsSequence()) return value.as<std::vector<T>>();
      return {value.as<T>()};
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("{}: invalid value{}", field(key), where(value)));
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), field(key));
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(fmt::format("unknown field '{}'{}", field(key), where(kv.first)));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Fn>
Enum parse_enum(const std::string& field, const std::string& text, std::initializer_list<Enum> options, Fn name) {
  for (Enum e : options) {
    if (text == name(e)) return e;
  }
  std::string valid;
  for (Enum e : options) valid += (valid.empty() ? "" : ", ") + std::string(name(e));
  throw ConfigError(fmt::format("{}: unknown value '{}' (expected one of {})", field, text, valid));
}

std::string_view dataset_name(DatasetKind k) { return k == DatasetKind::mnist ? "mnist" : "synthetic"; }
std::string_view precision_name(Precision p) { return p == Precision::float64 ? "double" : "float"; }

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

NoiseSpec NoiseConfig::for_nodes(int nodes) const {
  NoiseSpec spec;
  spec.kind = kind;
  spec.center = center;
  spec.combine = combine;
  spec.channel = channel;
  spec.uplink = uplink;
  if (node.size() == 1) {
    spec.node.assign(static_cast<std::size_t>(nodes), node.front());
  } else if (node.size() == static_cast<std::size_t>(nodes)) {
    spec.node = node;
  } else {
    throw ConfigError(fmt::format("noise.node: {} entries for {} nodes", node.size(), nodes));
  }
  return spec;
}

void ExperimentConfig::validate() const {
  if (schemes.empty()) throw ConfigError("schemes: at least one scheme is required");
  if (nodes.empty()) throw ConfigError("nodes: at least one node count is required");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds: seeds must be distinct");
  std::set<Scheme> unique_schemes(schemes.begin(), schemes.end());
  if (unique_schemes.size() != schemes.size()) throw ConfigError("schemes: schemes must be distinct");
  for (int n : nodes) {
    if (n < 1) throw ConfigError("nodes: node counts must be >= 1");
    noise.for_nodes(n).validate();
  }
  for (Scheme s : schemes) {
    TrainerConfig t = trainer;
    t.scheme = s;
    t.nodes = nodes.front();
    t.validate();
  }
  if (dataset.kind == DatasetKind::mnist) {
    if (dataset.train_images.empty() || dataset.train_labels.empty()) {
      throw ConfigError("dataset.train_images/train_labels: required for mnist");
    }
    if (dataset.test_images.empty() != dataset.test_labels.empty()) {
      throw ConfigError("dataset.test_images/test_labels: give both or neither");
    }
    if (dataset.train_subsample < 0 || dataset.test_subsample < 0) {
      throw ConfigError("dataset.train_subsample/test_subsample: must be >= 0");
    }
  } else {
    try {
      dataset.synthetic.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("dataset.synthetic: ") + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}: parse error at line {}, column {}: {}", source, e.mark.line + 1,
                                  e.mark.column + 1, e.msg));
  }
  ExperimentConfig c;
  Section top(root, "");

  {
    Section ds = top.child("dataset");
    c.dataset.kind = parse_enum(ds.field("kind"), ds.get<std::string>("kind", "synthetic"),
                                {DatasetKind::mnist, DatasetKind::synthetic}, dataset_name);
    c.dataset.train_images = ds.get<std::string>("train_images", "");
    c.dataset.train_labels = ds.get<std::string>("train_labels", "");
    c.dataset.test_images = ds.get<std::string>("test_images", "");
    c.dataset.test_labels = ds.get<std::string>("test_labels", "");
    c.dataset.train_subsample = ds.get<Index>("train_subsample", 0);
    c.dataset.test_subsample = ds.get<Index>("test_subsample", 0);
    c.dataset.subsample_seed = ds.get<std::uint64_t>("subsample_seed", 0);
    Section syn = ds.child("synthetic");
    SyntheticSpec& s = c.dataset.synthetic;
    s.dim = syn.get<Index>("dim", s.dim);
    s.samples = syn.get<Index>("samples", s.samples);
    s.margin = syn.get<double>("margin", s.margin);
    s.flip_prob = syn.get<double>("flip_prob", s.flip_prob);
    s.seed = syn.get<std::uint64_t>("seed", s.seed);
    syn.finish();
    ds.finish();
  }

  std::vector<Scheme> schemes;
  for (const auto& name : top.get_list<std::string>("schemes", {"centralized"})) {
    try {
      schemes.push_back(parse_scheme(name));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("schemes: ") + e.what());
    }
  }
  c.schemes = schemes;
  c.nodes = top.get_list<int>("nodes", {1});
  c.seeds = top.get_list<std::uint64_t>("seeds", {0});

  {
    Section nz = top.child("noise");
    c.noise.kind = parse_enum(nz.field("kind"), nz.get<std::string>("kind", "expectation"),
                              {NoiseKind::expectation, NoiseKind::worst_case},
                              [](NoiseKind k) { return to_string(k); });
    c.noise.center = nz.get<double>("center", 0.0);
    c.noise.node = nz.get_list<double>("node", {0.0});
    c.noise.combine = parse_enum(nz.field("combine"), nz.get<std::string>("combine", "paper_sum"),
                                 {CombineRule::paper_sum, CombineRule::triangle},
                                 [](CombineRule r) { return to_string(r); });
    c.noise.channel = parse_enum(nz.field("channel"), nz.get<std::string>("channel", "combined"),
                                 {ChannelMode::combined, ChannelMode::two_stage},
                                 [](ChannelMode m) { return to_string(m); });
    c.noise.uplink = parse_enum(nz.field("uplink"), nz.get<std::string>("uplink", "at_center"),
                                {UplinkMode::at_center, UplinkMode::per_link},
                                [](UplinkMode m) { return to_string(m); });
    nz.finish();
  }

  {
    Section tr = top.child("trainer");
    TrainerConfig& t = c.trainer;
    t.step_size = tr.get<double>("step_size", t.step_size);
    t.rounds = tr.get<int>("rounds", t.rounds);
    t.gamma_exponent = tr.get<double>("alpha", t.gamma_exponent);
    t.rho_exponent = tr.get<double>("beta", t.rho_exponent);
    t.proximal = tr.get<double>("lambda", t.proximal);
    t.inner_iters = tr.get<int>("inner_iters", t.inner_iters);
    t.inner_tol = tr.get<double>("inner_tol", t.inner_tol);
    t.rla_mode = parse_enum(tr.field("rla_mode"), tr.get<std::string>("rla_mode", "paper_closed_form"),
                            {RlaMode::paper_closed_form, RlaMode::exact_hvp}, [](RlaMode m) { return to_string(m); });
    if (tr.has("rla_variance")) t.rla_variance = tr.get<double>("rla_variance", 0.0);
    else tr.raw("rla_variance");
    t.sample_sharing = parse_enum(tr.field("sample_sharing"), tr.get<std::string>("sample_sharing", "per_node"),
                                  {SampleSharing::per_node, SampleSharing::shared},
                                  [](SampleSharing s) { return to_string(s); });
    t.ridge = tr.get<double>("ridge", t.ridge);
    t.stop_tol = tr.get<double>("stop_tol", t.stop_tol);
    c.precision = parse_enum(tr.field("precision"), tr.get<std::string>("precision", "double"),
                             {Precision::float64, Precision::float32}, precision_name);
    tr.finish();
  }

  c.compute_optimum = top.get<bool>("compute_optimum", true);
  {
    Section out = top.child("output");
    c.output_dir = out.get<std::string>("dir", "results");
    c.record_timing = out.get<bool>("record_timing", false);
    out.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig config = parse_config(buf.str(), path.string());
  // Dataset paths are relative to the config file, not the working directory.
  const auto base = std::filesystem::absolute(path).parent_path();
  for (auto* p : {&config.dataset.train_images, &config.dataset.train_labels, &config.dataset.test_images,
                  &config.dataset.test_labels}) {
    if (!p->empty() && p->is_relative()) *p = (base / *p).lexically_normal();
  }
  return config;
}

std::string echo_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(dataset_name(c.dataset.kind));
  out << YAML::Key << "train_images" << YAML::Value << c.dataset.train_images.string();
  out << YAML::Key << "train_labels" << YAML::Value << c.dataset.train_labels.string();
  out << YAML::Key << "test_images" << YAML::Value << c.dataset.test_images.string();
  out << YAML::Key << "test_labels" << YAML::Value << c.dataset.test_labels.string();
  out << YAML::Key << "train_subsample" << YAML::Value << c.dataset.train_subsample;
  out << YAML::Key << "test_subsample" << YAML::Value << c.dataset.test_subsample;
  out << YAML::Key << "subsample_seed" << YAML::Value << c.dataset.subsample_seed;
  out << YAML::Key << "synthetic" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dim" << YAML::Value << c.dataset.synthetic.dim;
  out << YAML::Key << "samples" << YAML::Value << c.dataset.synthetic.samples;
  out << YAML::Key << "margin" << YAML::Value << num(c.dataset.synthetic.margin);
  out << YAML::Key << "flip_prob" << YAML::Value << num(c.dataset.synthetic.flip_prob);
  out << YAML::Key << "seed" << YAML::Value << c.dataset.synthetic.seed;
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "schemes" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Scheme s : c.schemes) out << std::string(to_string(s));
  out << YAML::EndSeq;
  out << YAML::Key << "nodes" << YAML::Value << YAML::Flow << c.nodes;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;

  out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.noise.kind));
  out << YAML::Key << "center" << YAML::Value << num(c.noise.center);
  out << YAML::Key << "node" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : c.noise.node) out << num(v);
  out << YAML::EndSeq;
  out << YAML::Key << "combine" << YAML::Value << std::string(to_string(c.noise.combine));
  out << YAML::Key << "channel" << YAML::Value << std::string(to_string(c.noise.channel));
  out << YAML::Key << "uplink" << YAML::Value << std::string(to_string(c.noise.uplink));
  out << YAML::EndMap;

  const TrainerConfig& t = c.trainer;
  out << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "step_size" << YAML::Value << num(t.step_size);
  out << YAML::Key << "rounds" << YAML::Value << t.rounds;
  out << YAML::Key << "alpha" << YAML::Value << num(t.gamma_exponent);
  out << YAML::Key << "beta" << YAML::Value << num(t.rho_exponent);
  out << YAML::Key << "lambda" << YAML::Value << num(t.proximal);
  out << YAML::Key << "inner_iters" << YAML::Value << t.inner_iters;
  out << YAML::Key << "inner_tol" << YAML::Value << num(t.inner_tol);
  out << YAML::Key << "rla_mode" << YAML::Value << std::string(to_string(t.rla_mode));
  if (t.rla_variance) out << YAML::Key << "rla_variance" << YAML::Value << num(*t.rla_variance);
  out << YAML::Key << "sample_sharing" << YAML::Value << std::string(to_string(t.sample_sharing));
  out << YAML::Key << "ridge" << YAML::Value << num(t.ridge);
  out << YAML::Key << "stop_tol" << YAML::Value << num(t.stop_tol);
  out << YAML::Key << "precision" << YAML::Value << std::string(precision_name(c.precision));
  out << YAML::EndMap;

  out << YAML::Key << "compute_optimum" << YAML::Value << c.compute_optimum;
  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dir" << YAML::Value << c.output_dir.string();
  out << YAML::Key << "record_timing" << YAML::Value << c.record_timing;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_reference() {
  return R"(# Experiment config reference (YAML). Every key is optional; defaults shown.
dataset:
  kind: synthetic          # mnist | synthetic
  train_images: ""         # IDX images (raw or gzip), mnist only; relative paths resolve against the config file
  train_labels: ""         # IDX labels, mnist only
  test_images: ""          # optional held-out split; accuracy uses train data when absent
  test_labels: ""
  train_subsample: 0       # keep the first k rows of a seeded permutation (0 = all)
  test_subsample: 0
  subsample_seed: 0
  synthetic:
    dim: 10                # including the bias coordinate
    samples: 500
    margin: 0.1            # |<w*, x>| >= margin for every sample
    flip_prob: 0.0         # label flip probability, in [0, 0.5)
    seed: 0
schemes: [centralized]     # any of centralized, conventional, rla, worst_case
nodes: [1]                 # node counts N; one run per scheme x N x seed
seeds: [0]                 # distinct master seeds (partition and noise streams)
noise:
  kind: expectation        # expectation (Gaussian) | worst_case (sphere boundary)
  center: 0.0              # sigma^2, aggregation-side variance or squared radius
  node: [0.0]              # sigma_j^2, one value for all nodes or one per node
  combine: paper_sum       # worst_case radii: paper_sum (s^2 + s_j^2) | triangle ((s + s_j)^2)
  channel: combined        # combined (one summed perturbation per node) | two_stage
  uplink: at_center        # two_stage only: at_center | per_link
trainer:
  step_size: 0.01          # eta
  rounds: 500              # T
  alpha: 0.75              # gamma^t = t^-alpha (worst_case)
  beta: 0.6                # rho^t = (t+1)^-beta (worst_case); 0.5 < beta < alpha < 1
  lambda: 1.0              # proximal weight of the surrogate
  inner_iters: 200         # surrogate gradient-descent cap
  inner_tol: 1.0e-8        # surrogate gradient-norm tolerance
  rla_mode: paper_closed_form  # paper_closed_form | exact_hvp
  rla_variance: <unset>    # sigma_e^2 used by the rla gradient; defaults to the channel's
  sample_sharing: per_node # worst_case perturbation per node | shared across nodes
  ridge: 0.0               # mu, ridge weight of the loss
  stop_tol: 1.0e-6         # stop when the global gradient norm falls below this
  precision: double        # double | float
compute_optimum: true      # synthetic only: solve for F(w*) and report optimality_gap
output:
  dir: results
  record_timing: false     # fill wall_ms in metrics.csv (reruns are no longer byte-identical)
)";
}

}  // namespace rfl
