#include "seqfuse/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace seqfuse {

namespace {

enum class Kind { kInt, kDouble, kBool, kString, kChoice, kAutoDouble, kList };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* fallback;
  const char* choices = "";  // space separated, kChoice only
};

// clang-format off
constexpr KeySpec kKeys[] = {
    // task generation
    {"vocab_size", Kind::kInt, "20"},
    {"markov_order", Kind::kInt, "1"},
    {"temperature", Kind::kDouble, "0.5"},
    {"eos_prob", Kind::kDouble, "0.2"},
    {"max_sentence_len", Kind::kInt, "12"},
    {"frames_per_token", Kind::kInt, "2"},
    {"feature_dim", Kind::kInt, "8"},
    {"noise_std", Kind::kDouble, "1.0"},
    {"n_train", Kind::kInt, "2000"},
    {"n_dev", Kind::kInt, "200"},
    {"n_test", Kind::kInt, "200"},
    {"n_text_only", Kind::kInt, "20000"},
    {"seed", Kind::kInt, "42"},
    // acoustic model
    {"embed_dim", Kind::kInt, "16"},
    {"hidden_dim", Kind::kInt, "32"},
    {"attention_dim", Kind::kInt, "32"},
    {"encoder_layers", Kind::kInt, "1"},
    // language model
    {"lm_type", Kind::kChoice, "ngram", "ngram rnn"},
    {"lm_order", Kind::kInt, "2"},
    {"lm_kappa", Kind::kDouble, "0.1"},
    {"lm_hidden_dim", Kind::kInt, "32"},
    {"lm_epochs", Kind::kInt, "3"},
    {"lm_lr", Kind::kDouble, "0.5"},
    // training
    {"criterion", Kind::kChoice, "ce", "ce local mmi lm"},
    {"alpha", Kind::kDouble, "1.0"},
    {"beta", Kind::kDouble, "0.35"},
    {"gamma_den", Kind::kDouble, "1.0"},
    {"nbest", Kind::kInt, "8"},
    {"joint_lm", Kind::kBool, "false"},
    {"lr", Kind::kAutoDouble, "auto"},
    {"clip_norm", Kind::kDouble, "5.0"},
    {"batch_size", Kind::kAutoDouble, "auto"},
    {"epochs", Kind::kInt, "20"},
    // decoding
    {"decode_mode", Kind::kChoice, "auto", "auto am_only shallow local"},
    {"decode_alpha", Kind::kAutoDouble, "auto"},
    {"decode_beta", Kind::kAutoDouble, "auto"},
    {"beam_size", Kind::kInt, "4"},
    {"max_len", Kind::kInt, "20"},
    {"length_norm", Kind::kBool, "false"},
    // paths
    {"data_dir", Kind::kString, "data"},
    {"work_dir", Kind::kString, "work"},
    {"lm_path", Kind::kString, ""},
    {"init_checkpoint", Kind::kString, ""},
    {"checkpoint", Kind::kString, ""},
    {"split", Kind::kChoice, "dev", "train dev test"},
    {"hyp_path", Kind::kString, ""},
    // sweep and bench
    {"sweep_gamma_abs", Kind::kList, ""},
    {"sweep_gamma_rel", Kind::kList, ""},
    {"sweep_gamma_den", Kind::kList, ""},
    {"bench_steps", Kind::kInt, "200"},
    {"bench_warmup", Kind::kInt, "20"},
};
// clang-format on

const KeySpec* find_spec(std::string_view key) {
  for (const auto& s : kKeys)
    if (key == s.key) return &s;
  return nullptr;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_int(std::string_view s, long long& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

void check_value(const KeySpec& spec, std::string_view v) {
  auto bad = [&](const char* what) {
    throw ConfigError("config key '" + std::string(spec.key) + "': '" + std::string(v) + "' is not " + what);
  };
  long long i = 0;
  double d = 0.0;
  switch (spec.kind) {
    case Kind::kInt:
      if (!parse_int(v, i)) bad("an integer");
      break;
    case Kind::kDouble:
      if (!parse_double(v, d)) bad("a number");
      break;
    case Kind::kAutoDouble:
      if (v != "auto" && !parse_double(v, d)) bad("a number or 'auto'");
      break;
    case Kind::kBool:
      if (v != "true" && v != "false") bad("true or false");
      break;
    case Kind::kChoice: {
      std::istringstream cs(spec.choices);
      std::string c;
      while (cs >> c)
        if (c == v) return;
      bad((std::string("one of: ") + spec.choices).c_str());
      break;
    }
    case Kind::kList:
      for (auto item : split_list(v))
        if (!parse_double(item, d)) bad("a comma-separated list of numbers");
      break;
    case Kind::kString:
      break;
  }
}

}  // namespace

Criterion parse_criterion(std::string_view s) {
  if (s == "ce") return Criterion::kCe;
  if (s == "local") return Criterion::kLocal;
  if (s == "mmi") return Criterion::kMmi;
  if (s == "lm") return Criterion::kLm;
  throw ConfigError("unknown criterion '" + std::string(s) + "'");
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::kCe:
      return "ce";
    case Criterion::kLocal:
      return "local";
    case Criterion::kMmi:
      return "mmi";
    case Criterion::kLm:
      return "lm";
  }
  return "?";
}

RunConfig::RunConfig() {
  for (const auto& s : kKeys) values_.emplace(s.key, s.fallback);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown config key '" + std::string(key) + "'");
  check_value(*spec, value);
  values_.find(key)->second = std::string(value);
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::print() const {
  std::string out;
  for (const auto& s : kKeys) out += std::string(s.key) + " = " + values_.find(s.key)->second + "\n";
  return out;
}

const std::string& RunConfig::raw(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

int RunConfig::get_int(std::string_view key) const {
  long long v = 0;
  if (!parse_int(raw(key), v)) throw ConfigError("config key '" + std::string(key) + "' is not an integer");
  return static_cast<int>(v);
}

double RunConfig::get_double(std::string_view key) const {
  double v = 0.0;
  if (!parse_double(raw(key), v)) throw ConfigError("config key '" + std::string(key) + "' is not a number");
  return v;
}

bool RunConfig::get_bool(std::string_view key) const { return raw(key) == "true"; }

std::string RunConfig::get_string(std::string_view key) const { return raw(key); }

std::optional<double> RunConfig::get_auto_double(std::string_view key) const {
  if (raw(key) == "auto") return std::nullopt;
  return get_double(key);
}

std::vector<double> RunConfig::get_list(std::string_view key) const {
  std::vector<double> out;
  for (auto item : split_list(raw(key))) {
    double d = 0.0;
    parse_double(item, d);
    out.push_back(d);
  }
  return out;
}

TaskConfig RunConfig::task() const {
  TaskConfig t;
  t.vocab_size = get_int("vocab_size");
  t.markov_order = get_int("markov_order");
  t.temperature = get_double("temperature");
  t.eos_prob = get_double("eos_prob");
  t.max_sentence_len = get_int("max_sentence_len");
  t.frames_per_token = get_int("frames_per_token");
  t.feature_dim = get_int("feature_dim");
  t.noise_std = get_double("noise_std");
  t.n_train = get_int("n_train");
  t.n_dev = get_int("n_dev");
  t.n_test = get_int("n_test");
  t.n_text_only = get_int("n_text_only");
  t.seed = static_cast<std::uint64_t>(get_int("seed"));
  return t;
}

AcousticModelDims RunConfig::am_dims() const {
  AcousticModelDims d;
  d.vocab_size = get_int("vocab_size");
  d.feature_dim = get_int("feature_dim");
  d.embed_dim = get_int("embed_dim");
  d.hidden_dim = get_int("hidden_dim");
  d.attention_dim = get_int("attention_dim");
  d.encoder_layers = get_int("encoder_layers");
  return d;
}

RecurrentLMDims RunConfig::lm_dims() const { return {get_int("vocab_size"), get_int("lm_hidden_dim")}; }

Criterion RunConfig::criterion() const { return parse_criterion(raw("criterion")); }

Scales RunConfig::scales() const { return {get_double("alpha"), get_double("beta"), get_double("gamma_den")}; }

DecodeConfig RunConfig::decode() const {
  DecodeConfig d;
  const std::string& mode = raw("decode_mode");
  if (mode == "auto")
    d.mode = criterion() == Criterion::kLocal ? DecodeMode::kLocal : DecodeMode::kShallow;
  else
    d.mode = parse_decode_mode(mode);
  d.alpha = get_auto_double("decode_alpha").value_or(get_double("alpha"));
  d.beta = get_auto_double("decode_beta").value_or(get_double("beta"));
  d.beam_size = get_int("beam_size");
  d.max_len = get_int("max_len");
  d.length_norm = get_bool("length_norm");
  return d;
}

double RunConfig::learning_rate() const {
  if (auto lr = get_auto_double("lr")) return *lr;
  return criterion() == Criterion::kMmi ? 0.005 : 0.05;
}

int RunConfig::batch_size() const {
  if (auto b = get_auto_double("batch_size")) return static_cast<int>(*b);
  return criterion() == Criterion::kMmi ? 4 : 16;
}

void RunConfig::validate() const {
  try {
    task().validate();
    scales().validate();
    decode().validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (get_int("lm_order") < 1) throw ConfigError("lm_order must be >= 1");
  if (!(get_double("lm_kappa") > 0.0)) throw ConfigError("lm_kappa must be > 0");
  if (get_int("nbest") < 1) throw ConfigError("nbest must be >= 1");
  if (get_int("epochs") < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size() < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate() > 0.0)) throw ConfigError("lr must be > 0");
  if (!(get_double("clip_norm") > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (get_bool("joint_lm") && criterion() != Criterion::kLocal)
    throw ConfigError("joint_lm is only supported with criterion = local");
  if (get_bool("joint_lm") && raw("lm_type") != "rnn") throw ConfigError("joint_lm needs lm_type = rnn");
}

}  // namespace seqfuse
