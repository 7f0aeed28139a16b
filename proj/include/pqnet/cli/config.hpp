#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pqnet/latentgan/gan.hpp"
#include "pqnet/metrics/metrics.hpp"
#include "pqnet/partae/train.hpp"
#include "pqnet/seq2seq/train.hpp"
#include "pqnet/tasks/assemble.hpp"
#include "pqnet/tasks/svr.hpp"

namespace pqnet::cli {

namespace fs = std::filesystem;

/// Everything a command needs; defaults follow the training setup of the
/// model (batch sizes, step sizes, loss weights, K_max, λ).
struct RunConfig {
  std::uint64_t seed = 0;
  fs::path data_root = "data";
  fs::path run_dir = "runs/default";
  std::string source = "synthetic";  // or a directory in the dataset layout
  std::vector<std::pair<std::string, int>> categories{{"chair", 50}};
  int k_max = seq2seq::kDefaultKMax;

  partae::PartAeConfig partae;
  partae::PartAeTrainConfig partae_train;
  seq2seq::Seq2SeqConfig seq;
  seq2seq::Seq2SeqTrainConfig seq_train;
  latentgan::LatentGanConfig gan;
  latentgan::LatentGanTrainConfig gan_train;
  tasks::SvrConfig svr;
  tasks::SvrTrainConfig svr_train;
  int svr_views = datakit::kNumViews;
  seq2seq::Seq2SeqTrainConfig completion_train, denoise_train;

  int count = 10;
  int resolution = 64;

  int eval_points = 2000;
  std::vector<metrics::DistanceKind> distances{metrics::DistanceKind::kChamfer};
  int jsd_grid = metrics::kJsdGrid;

  RunConfig() {
    seq_train.batch_size = 64;
    completion_train = denoise_train = seq_train;
    gan_train.iterations = 20000;
  }

  /// Dimensions that follow from other settings.
  void link() {
    seq.code_dim = partae.code_dim;
    seq.k_max = k_max;
    gan.latent_dim = seq.latent_dim();
    svr.latent_dim = seq.latent_dim();
  }
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline long parse_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long r = 0;
  try {
    r = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidInput("config " + key + ": expected an integer, got '" + v + "'");
  return r;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double r = 0;
  try {
    r = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidInput("config " + key + ": expected a number, got '" + v + "'");
  return r;
}

inline std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split(v, ',')) out.push_back(static_cast<int>(parse_long(key, s)));
  if (out.empty()) throw InvalidInput("config " + key + ": empty list");
  return out;
}

/// Shortest decimal text that reads back as the same double.
inline std::string fmt(double v) {
  for (int p = 6; p <= 17; ++p) {
    std::ostringstream ss;
    ss.precision(p);
    ss << v;
    if (std::stod(ss.str()) == v || p == 17) return ss.str();
  }
  return {};
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define PQNET_INT_FIELD(key, expr)                                     \
  {key, Field{[](const RunConfig& c) { return std::to_string(c.expr); }, \
              [](RunConfig& c, const std::string& v) { c.expr = static_cast<decltype(c.expr)>(parse_long(key, v)); }}}
#define PQNET_REAL_FIELD(key, expr)                        \
  {key, Field{[](const RunConfig& c) { return fmt(c.expr); }, \
              [](RunConfig& c, const std::string& v) { c.expr = parse_double(key, v); }}}
#define PQNET_INTS_FIELD(key, expr)                              \
  {key, Field{[](const RunConfig& c) { return join_ints(c.expr); }, \
              [](RunConfig& c, const std::string& v) { c.expr = parse_ints(key, v); }}}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      PQNET_INT_FIELD("run.seed", seed),
      {"run.dir", {[](const RunConfig& c) { return c.run_dir.string(); },
                   [](RunConfig& c, const std::string& v) { c.run_dir = v; }}},
      {"data.root", {[](const RunConfig& c) { return c.data_root.string(); },
                     [](RunConfig& c, const std::string& v) { c.data_root = v; }}},
      {"data.source", {[](const RunConfig& c) { return c.source; },
                       [](RunConfig& c, const std::string& v) { c.source = v; }}},
      {"data.categories",
       {[](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.categories.size(); ++i)
            s += (i ? "," : "") + c.categories[i].first + ":" + std::to_string(c.categories[i].second);
          return s;
        },
        [](RunConfig& c, const std::string& v) {
          c.categories.clear();
          for (const auto& item : split(v, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) c.categories.emplace_back(item, 50);
            else
              c.categories.emplace_back(item.substr(0, colon),
                                        static_cast<int>(parse_long("data.categories", item.substr(colon + 1))));
          }
        }}},
      PQNET_INT_FIELD("data.k_max", k_max),

      PQNET_INTS_FIELD("partae.encoder_channels", partae.encoder_channels),
      PQNET_INT_FIELD("partae.code_dim", partae.code_dim),
      PQNET_INTS_FIELD("partae.decoder_hidden", partae.decoder_hidden),
      PQNET_REAL_FIELD("partae.dropout", partae.decoder_dropout),
      PQNET_INTS_FIELD("partae.stages", partae_train.stages),
      PQNET_INTS_FIELD("partae.epochs", partae_train.epochs),
      PQNET_INT_FIELD("partae.batch", partae_train.batch_size),
      PQNET_REAL_FIELD("partae.lr", partae_train.lr),
      PQNET_INT_FIELD("partae.points_per_step", partae_train.points_per_step),

      PQNET_INT_FIELD("seq2seq.hidden", seq.enc_hidden),
      PQNET_INT_FIELD("seq2seq.geo_hidden", seq.geo_hidden),
      PQNET_INT_FIELD("seq2seq.box_hidden", seq.box_hidden),
      PQNET_INT_FIELD("seq2seq.stop_hidden", seq.stop_hidden),
      PQNET_INT_FIELD("seq2seq.epochs", seq_train.epochs),
      PQNET_INT_FIELD("seq2seq.batch", seq_train.batch_size),
      PQNET_REAL_FIELD("seq2seq.lr", seq_train.lr),
      PQNET_REAL_FIELD("seq2seq.alpha", seq_train.weights.alpha),
      PQNET_REAL_FIELD("seq2seq.beta", seq_train.weights.beta),

      PQNET_INT_FIELD("gan.z_dim", gan.z_dim),
      PQNET_INTS_FIELD("gan.generator_hidden", gan.generator_hidden),
      PQNET_INTS_FIELD("gan.critic_hidden", gan.critic_hidden),
      PQNET_INT_FIELD("gan.iterations", gan_train.iterations),
      PQNET_INT_FIELD("gan.n_critic", gan_train.n_critic),
      PQNET_INT_FIELD("gan.batch", gan_train.batch_size),
      PQNET_REAL_FIELD("gan.lambda", gan_train.lambda),
      PQNET_REAL_FIELD("gan.lr", gan_train.lr),

      {"svr.branch", {[](const RunConfig& c) { return tasks::to_string(c.svr.branch); },
                      [](RunConfig& c, const std::string& v) { c.svr.branch = tasks::parse_branch(v); }}},
      PQNET_INTS_FIELD("svr.depth_channels", svr.depth_channels),
      PQNET_INT_FIELD("svr.resnet_width", svr.resnet_width),
      PQNET_INT_FIELD("svr.views", svr_views),
      PQNET_INT_FIELD("svr.epochs", svr_train.epochs),
      PQNET_INT_FIELD("svr.batch", svr_train.batch),
      PQNET_REAL_FIELD("svr.lr", svr_train.lr),

      PQNET_INT_FIELD("completion.epochs", completion_train.epochs),
      PQNET_INT_FIELD("completion.batch", completion_train.batch_size),
      PQNET_REAL_FIELD("completion.lr", completion_train.lr),
      PQNET_REAL_FIELD("completion.alpha", completion_train.weights.alpha),
      PQNET_INT_FIELD("denoise.epochs", denoise_train.epochs),
      PQNET_INT_FIELD("denoise.batch", denoise_train.batch_size),
      PQNET_REAL_FIELD("denoise.lr", denoise_train.lr),
      PQNET_REAL_FIELD("denoise.alpha", denoise_train.weights.alpha),

      PQNET_INT_FIELD("generate.count", count),
      PQNET_INT_FIELD("generate.resolution", resolution),

      PQNET_INT_FIELD("eval.points", eval_points),
      PQNET_INT_FIELD("eval.jsd_grid", jsd_grid),
      {"eval.distances",
       {[](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.distances.size(); ++i) s += (i ? "," : "") + metrics::to_string(c.distances[i]);
          return s;
        },
        [](RunConfig& c, const std::string& v) {
          c.distances.clear();
          for (const auto& item : split(v, ',')) c.distances.push_back(metrics::parse_distance_kind(item));
        }}},
  };
  return table;
}

#undef PQNET_INT_FIELD
#undef PQNET_REAL_FIELD
#undef PQNET_INTS_FIELD

}  // namespace detail

inline void set_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& f = detail::fields();
  const auto it = f.find(key);
  if (it == f.end()) throw InvalidInput("unknown config key '" + key + "'");
  it->second.set(c, value);
}

/// Flat key → value view of every setting.
inline std::map<std::string, std::string> snapshot(const RunConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : detail::fields()) out[k] = f.get(c);
  return out;
}

inline void validate(const RunConfig& c) {
  auto positive = [](bool ok, const std::string& what) { require(ok, "config: " + what + " must be positive"); };
  for (const auto& [name, n] : c.categories) positive(n >= 1 && !name.empty(), "data.categories count");
  require(!c.categories.empty(), "config: data.categories is empty");
  positive(c.k_max >= 1, "data.k_max");
  positive(c.partae.code_dim >= 1, "partae.code_dim");
  for (int v : c.partae.encoder_channels) positive(v >= 1, "partae.encoder_channels");
  for (int v : c.partae.decoder_hidden) positive(v >= 1, "partae.decoder_hidden");
  require(c.partae.decoder_dropout >= 0 && c.partae.decoder_dropout < 1, "config: partae.dropout must lie in [0,1)");
  require(c.partae_train.stages.size() == c.partae_train.epochs.size(),
          "config: partae.stages and partae.epochs differ in length");
  for (int s : c.partae_train.stages) require(s == 16 || s == 32 || s == 64, "config: partae.stages must be 16, 32 or 64");
  for (int e : c.partae_train.epochs) positive(e >= 1, "partae.epochs");
  positive(c.partae_train.batch_size >= 1 && c.partae_train.lr > 0, "partae.batch / partae.lr");
  positive(c.seq.enc_hidden >= 1 && c.seq.geo_hidden >= 1 && c.seq.box_hidden >= 1 && c.seq.stop_hidden >= 1,
           "seq2seq widths");
  for (const auto* t : {&c.seq_train, &c.completion_train, &c.denoise_train}) {
    positive(t->epochs >= 1 && t->batch_size >= 1 && t->lr > 0, "epochs / batch / lr");
    require(t->weights.alpha >= 0 && t->weights.beta >= 0, "config: alpha and beta must be >= 0");
  }
  positive(c.gan.z_dim >= 1 && c.gan_train.iterations >= 1 && c.gan_train.n_critic >= 1 &&
               c.gan_train.batch_size >= 1 && c.gan_train.lr > 0,
           "gan settings");
  require(c.gan_train.lambda >= 0, "config: gan.lambda must be >= 0");
  positive(c.svr_views >= 1 && c.svr_views <= datakit::kNumViews, "svr.views (at most 5)");
  positive(c.svr_train.epochs >= 1 && c.svr_train.batch >= 1 && c.svr_train.lr > 0, "svr settings");
  positive(c.count >= 1, "generate.count");
  require(tasks::valid_assembly_resolution(c.resolution), "config: generate.resolution must be 32, 64, 128 or 256");
  positive(c.eval_points >= 1 && c.jsd_grid >= 1, "eval settings");
  require(!c.distances.empty(), "config: eval.distances is empty");
}

/// Reads `[section]` / `key = value` text; `#` and `;` start comments.
inline void apply_file(RunConfig& c, const fs::path& path) {
  if (!fs::exists(path)) throw InvalidInput("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidInput("config file " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw InvalidInput("config key '" + section + "' must appear inside a [section]");
    for (const auto& [key, value] : body) {
      std::string v = value.data();
      if (const auto hash = v.find('#'); hash != std::string::npos) v = v.substr(0, hash);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.pop_back();
      set_value(c, section + "." + key, v);
    }
  }
}

/// Defaults, then the config file, then the environment, then flags.
inline RunConfig resolve_config(const std::string& config_path, const std::map<std::string, std::string>& flags) {
  RunConfig c;
  if (!config_path.empty()) apply_file(c, config_path);
  if (const char* env = std::getenv("PQNET_DATA_ROOT"); env && *env) c.data_root = env;
  for (const auto& [k, v] : flags) set_value(c, k, v);
  c.link();
  validate(c);
  return c;
}

}  // namespace pqnet::cli
