#include "hitok/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hitok/error.hpp"

namespace hitok {

namespace {

using nlohmann::json;

// Reads keys of one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& parent, const std::string& key, const std::string& path)
      : path_(path.empty() ? key : path + "." + key) {
    if (parent.contains(key)) {
      require(parent.at(key).is_object(), "config: '" + path_ + "' must be an object");
      obj_ = parent.at(key);
    } else {
      obj_ = json::object();
    }
  }
  explicit Section(const json& root) : obj_(root), path_("") {
    require(root.is_object(), "config: top level must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw PreconditionError("config: '" + where(key) + "' has the wrong type");
    }
  }
  bool has(const std::string& key) const { return obj_.contains(key); }
  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(obj_, key, path_);
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      require(seen_.count(it.key()) != 0, "config: unknown key '" + where(it.key()) + "'");
  }

 private:
  json obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

const char* mode_name(TokenMode m) { return m == TokenMode::Baseline ? "baseline" : "hit"; }

TokenMode parse_mode(const std::string& s) {
  if (s == "baseline") return TokenMode::Baseline;
  if (s == "hit") return TokenMode::Hierarchical;
  throw PreconditionError("config: mode must be \"baseline\" or \"hit\", got \"" + s + "\"");
}

}  // namespace

ArConfig ExperimentConfig::ar_model() const {
  ArConfig c = ar.model;
  c.vocab = codebook.size;
  c.code_dim = codec_channels;
  c.cond_dim = codec_channels;
  c.cond_side = schedule.native();
  return c;
}

void ExperimentConfig::reseed(std::uint64_t seed) {
  codebook.seed = mix(seed, 1);
  degradation.seed = mix(seed, 2);
  ar.seed = mix(seed, 3);
  ar.train.seed = mix(seed, 4);
  sampling.seed = mix(seed, 5);
  corpus.seed = mix(seed, 6);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw PreconditionError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root);

  {
    Section s = top.sub("schedule");
    std::vector<int> res = c.schedule.resolutions();
    std::vector<double> scales = c.schedule.target_scales();
    s.read("resolutions", res);
    s.read("scales", scales);
    s.finish();
    c.schedule = ScaleSchedule(res, scales);
  }
  {
    Section s = top.sub("codec");
    s.read("channels", c.codec_channels);
    s.read("seed", c.codec_seed);
    s.finish();
    require(c.codec_channels >= 1 && c.codec_channels <= PatchCodec::kPatchValues,
            "config: codec.channels must be in [1, 768]");
  }
  {
    Section s = top.sub("codebook");
    CodebookTrainingOptions& o = c.codebook;
    std::string metric = metric_name(o.metric), mode = mode_name(o.mode);
    int dim = c.codec_channels;
    s.read("size", o.size);
    s.read("dim", dim);
    s.read("metric", metric);
    s.read("seed", o.seed);
    s.read("epochs", o.epochs);
    s.read("decay", o.decay);
    s.read("mode", mode);
    s.read("max_init_samples", o.max_init_samples);
    s.read("lloyd_iterations", o.lloyd_iterations);
    s.read("balance_scales", o.balance_scales);
    s.finish();
    o.metric = parse_metric(metric);
    o.mode = parse_mode(mode);
    require(dim == c.codec_channels, "config: codebook.dim must equal codec.channels");
    require(o.size >= 1, "config: codebook.size must be >= 1");
    require(o.epochs >= 0 && o.lloyd_iterations >= 0, "config: codebook epochs/lloyd_iterations must be >= 0");
    require(o.decay > 0.0 && o.decay < 1.0, "config: codebook.decay must be in (0, 1)");
  }
  {
    Section s = top.sub("degradation");
    Degradation& d = c.degradation;
    s.read("blur_sigma", d.blur_sigma);
    s.read("factor", d.factor);
    s.read("noise_sigma", d.noise_sigma);
    s.read("seed", d.seed);
    s.finish();
    require(d.blur_sigma >= 0.0 && d.noise_sigma >= 0.0, "config: degradation sigmas must be >= 0");
    require(d.factor >= 1 && c.image_side() % d.factor == 0,
            "config: degradation.factor must be >= 1 and divide the image side");
  }
  {
    Section s = top.sub("ar");
    ArConfig& m = c.ar.model;
    TrainOptions& t = c.ar.train;
    s.read("width", m.width);
    s.read("depth", m.depth);
    s.read("heads", m.heads);
    s.read("ff_mult", m.ff_mult);
    s.read("init_std", m.init_std);
    s.read("seed", c.ar.seed);
    s.read("steps", t.steps);
    s.read("batch_size", t.batch_size);
    s.read("batch_seed", t.seed);
    s.read("lr", t.lr);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("eps", t.eps);
    s.read("clip_norm", t.clip_norm);
    s.read("log_every", t.log_every);
    s.read("dpo_weight", t.objective.dpo_weight);
    s.read("beta", t.objective.beta);
    s.read("sequence_level_dpo", t.objective.sequence_level_dpo);
    s.finish();
    require(m.width > 0 && m.depth > 0 && m.heads > 0 && m.ff_mult > 0 && m.width % m.heads == 0,
            "config: ar width/depth/heads/ff_mult must be positive and width divisible by heads");
    require(m.init_std > 0.0, "config: ar.init_std must be positive");
    require(t.steps >= 0 && t.batch_size >= 0 && t.log_every >= 1, "config: ar steps/batch_size/log_every invalid");
    require(t.lr > 0.0 && t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 > 0.0 && t.beta2 < 1.0 && t.eps > 0.0,
            "config: ar optimizer settings out of range");
    require(t.clip_norm >= 0.0 && t.objective.dpo_weight >= 0.0 && t.objective.beta > 0.0,
            "config: ar clip_norm/dpo_weight must be >= 0 and beta > 0");
  }
  {
    Section s = top.sub("sampling");
    std::string strategy = c.sampling.strategy == SampleStrategy::Greedy ? "greedy" : "top_k";
    s.read("strategy", strategy);
    s.read("top_k", c.sampling.top_k);
    s.read("seed", c.sampling.seed);
    s.finish();
    if (strategy == "greedy")
      c.sampling.strategy = SampleStrategy::Greedy;
    else if (strategy == "top_k")
      c.sampling.strategy = SampleStrategy::TopK;
    else
      throw PreconditionError("config: sampling.strategy must be \"greedy\" or \"top_k\"");
    require(c.sampling.top_k >= 1, "config: sampling.top_k must be >= 1");
  }
  {
    Section s = top.sub("corpus");
    s.read("train_count", c.corpus.train_count);
    s.read("test_count", c.corpus.test_count);
    s.read("seed", c.corpus.seed);
    s.finish();
    require(c.corpus.train_count >= 1 && c.corpus.test_count >= 0, "config: corpus counts invalid");
  }
  {
    Section s = top.sub("output");
    std::string dir = c.output.dir.string();
    s.read("dir", dir);
    s.finish();
    require(!dir.empty(), "config: output.dir must not be empty");
    c.output.dir = dir;
  }
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  const TrainOptions& t = c.ar.train;
  json j;
  j["schedule"] = {{"resolutions", c.schedule.resolutions()}, {"scales", c.schedule.target_scales()}};
  j["codec"] = {{"channels", c.codec_channels}, {"seed", c.codec_seed}};
  j["codebook"] = {{"size", c.codebook.size},
                   {"dim", c.codec_channels},
                   {"metric", metric_name(c.codebook.metric)},
                   {"seed", c.codebook.seed},
                   {"epochs", c.codebook.epochs},
                   {"decay", c.codebook.decay},
                   {"mode", mode_name(c.codebook.mode)},
                   {"max_init_samples", c.codebook.max_init_samples},
                   {"lloyd_iterations", c.codebook.lloyd_iterations},
                   {"balance_scales", c.codebook.balance_scales}};
  j["degradation"] = {{"blur_sigma", c.degradation.blur_sigma},
                      {"factor", c.degradation.factor},
                      {"noise_sigma", c.degradation.noise_sigma},
                      {"seed", c.degradation.seed}};
  j["ar"] = {{"width", c.ar.model.width},
             {"depth", c.ar.model.depth},
             {"heads", c.ar.model.heads},
             {"ff_mult", c.ar.model.ff_mult},
             {"init_std", c.ar.model.init_std},
             {"seed", c.ar.seed},
             {"steps", t.steps},
             {"batch_size", t.batch_size},
             {"batch_seed", t.seed},
             {"lr", t.lr},
             {"beta1", t.beta1},
             {"beta2", t.beta2},
             {"eps", t.eps},
             {"clip_norm", t.clip_norm},
             {"log_every", t.log_every},
             {"dpo_weight", t.objective.dpo_weight},
             {"beta", t.objective.beta},
             {"sequence_level_dpo", t.objective.sequence_level_dpo}};
  j["sampling"] = {{"strategy", c.sampling.strategy == SampleStrategy::Greedy ? "greedy" : "top_k"},
                   {"top_k", c.sampling.top_k},
                   {"seed", c.sampling.seed}};
  j["corpus"] = {{"train_count", c.corpus.train_count}, {"test_count", c.corpus.test_count}, {"seed", c.corpus.seed}};
  j["output"] = {{"dir", c.output.dir.string()}};
  return j.dump(2);
}

}  // namespace hitok
