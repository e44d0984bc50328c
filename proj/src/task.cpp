#include "seqfuse/task.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace seqfuse {

using json = nlohmann::json;

void TaskConfig::validate() const {
  if (vocab_size < 2) throw ArgumentError("task: vocab_size must be >= 2 (content + EOS)");
  if (markov_order < 1) throw ArgumentError("task: markov_order must be >= 1");
  if (!(temperature > 0.0)) throw ArgumentError("task: temperature must be > 0");
  if (!(eos_prob > 0.0 && eos_prob < 1.0)) throw ArgumentError("task: eos_prob must lie in (0, 1)");
  if (max_sentence_len < 1) throw ArgumentError("task: max_sentence_len must be >= 1");
  if (frames_per_token < 1) throw ArgumentError("task: frames_per_token must be >= 1");
  if (feature_dim < 1) throw ArgumentError("task: feature_dim must be >= 1");
  if (!(noise_std >= 0.0)) throw ArgumentError("task: noise_std must be >= 0");
  if (n_train < 0 || n_dev < 0 || n_test < 0) throw ArgumentError("task: split sizes must be >= 0");
  if (n_text_only < n_train) throw ArgumentError("task: n_text_only must be >= n_train");
}

MarkovSource::MarkovSource(const TaskConfig& cfg)
    : order_(cfg.markov_order), vocab_size_(cfg.vocab_size), max_len_(cfg.max_sentence_len) {
  cfg.validate();
  // Contexts: BOS padding only at the front, content tokens elsewhere.
  std::vector<TokenSeq> contexts{{}};
  for (int k = 0; k < order_; ++k) {
    std::vector<TokenSeq> next;
    for (const auto& c : contexts) {
      const bool padded = c.empty() || c.back() == kBos;
      if (padded) {
        TokenSeq b = c;
        b.push_back(kBos);
        next.push_back(std::move(b));
      }
      for (TokenId w = 1; w < vocab_size_; ++w) {
        TokenSeq x = c;
        x.push_back(w);
        next.push_back(std::move(x));
      }
    }
    contexts = std::move(next);
  }
  std::sort(contexts.begin(), contexts.end());

  Rng rng = rng_stream(cfg.seed, "task.transitions");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& ctx : contexts) {
    RowVecX logits(vocab_size_ - 1);
    for (Index i = 0; i < logits.size(); ++i) logits(i) = normal(rng) / cfg.temperature;
    RowVecX row(vocab_size_);
    const bool at_start = ctx.back() == kBos;
    const double eos = at_start ? 0.0 : cfg.eos_prob;
    row(0) = eos;
    const RowVecX p = (logits.array() - logits.maxCoeff()).exp();
    row.tail(vocab_size_ - 1) = (1.0 - eos) * p / p.sum();
    rows_.emplace(ctx, std::move(row));
  }
}

const RowVecX& MarkovSource::transition(const TokenSeq& context) const {
  auto it = rows_.find(context);
  if (it == rows_.end()) throw ArgumentError("MarkovSource: unknown context");
  return it->second;
}

TokenSeq MarkovSource::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TokenSeq ctx(static_cast<std::size_t>(order_), kBos);
  TokenSeq out;
  while (true) {
    TokenId w = kEos;
    if (static_cast<int>(out.size()) < max_len_) {
      const RowVecX& row = transition(ctx);
      const double u = unif(rng);
      double acc = 0.0;
      w = vocab_size_ - 1;
      for (TokenId k = 0; k < vocab_size_; ++k) {
        acc += row(k);
        if (u < acc) {
          w = k;
          break;
        }
      }
      // The start row has no EOS mass; guard against u landing on it.
      if (w == kEos && ctx.back() == kBos) w = 1;
    }
    out.push_back(w);
    if (w == kEos) return out;
    ctx.erase(ctx.begin());
    ctx.push_back(w);
  }
}

const std::vector<Utterance>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ArgumentError("unknown dataset split '" + std::string(name) + "'");
}

MatX token_prototypes(const TaskConfig& cfg) {
  Rng rng = rng_stream(cfg.seed, "task.prototypes");
  std::normal_distribution<double> normal(0.0, 1.0);
  MatX protos = MatX::Zero(cfg.vocab_size, cfg.feature_dim);
  for (Index w = 1; w < protos.rows(); ++w)
    for (Index d = 0; d < protos.cols(); ++d) protos(w, d) = normal(rng);
  return protos;
}

namespace {

std::vector<Utterance> make_split(const TaskConfig& cfg, const MarkovSource& src, const MatX& protos,
                                  const std::string& name, int count) {
  Rng text_rng = rng_stream(cfg.seed, "task.text." + name);
  Rng noise_rng = rng_stream(cfg.seed, "task.noise." + name);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Utterance u;
    std::ostringstream id;
    id << name << '-' << std::setw(5) << std::setfill('0') << i;
    u.id = id.str();
    u.tokens = src.sample(text_rng);
    const Index content = static_cast<Index>(u.tokens.size()) - 1;
    u.feats.resize(content * cfg.frames_per_token, cfg.feature_dim);
    for (Index n = 0; n < content; ++n)
      for (int r = 0; r < cfg.frames_per_token; ++r) {
        const Index t = n * cfg.frames_per_token + r;
        for (Index d = 0; d < cfg.feature_dim; ++d)
          u.feats(t, d) = protos(u.tokens[static_cast<std::size_t>(n)], d) + cfg.noise_std * noise(noise_rng);
      }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const TaskConfig& cfg) {
  cfg.validate();
  const MarkovSource src(cfg);
  const MatX protos = token_prototypes(cfg);
  Dataset ds;
  ds.train = make_split(cfg, src, protos, "train", cfg.n_train);
  ds.dev = make_split(cfg, src, protos, "dev", cfg.n_dev);
  ds.test = make_split(cfg, src, protos, "test", cfg.n_test);
  Rng text_rng = rng_stream(cfg.seed, "task.text.text_only");
  ds.text_only.reserve(static_cast<std::size_t>(cfg.n_text_only));
  for (int i = 0; i < cfg.n_text_only; ++i) ds.text_only.push_back(src.sample(text_rng));
  ds.vocab.push_back("</s>");
  for (int w = 1; w < cfg.vocab_size; ++w) ds.vocab.push_back("w" + std::to_string(w));
  return ds;
}

void write_utterances(const std::filesystem::path& path, const std::vector<Utterance>& utts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& u : utts) {
    json feats = json::array();
    for (Index t = 0; t < u.feats.rows(); ++t) {
      json row = json::array();
      for (Index d = 0; d < u.feats.cols(); ++d) row.push_back(u.feats(t, d));
      feats.push_back(std::move(row));
    }
    json rec = {{"id", u.id}, {"tokens", u.tokens}, {"feats", std::move(feats)}};
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<Utterance> read_utterances(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Utterance u;
      u.id = rec.at("id").get<std::string>();
      u.tokens = rec.at("tokens").get<TokenSeq>();
      const auto& feats = rec.at("feats");
      const Index rows = static_cast<Index>(feats.size());
      const Index cols = rows ? static_cast<Index>(feats.at(0).size()) : 0;
      u.feats.resize(rows, cols);
      for (Index t = 0; t < rows; ++t) {
        if (static_cast<Index>(feats[t].size()) != cols) throw DataError("ragged feature rows");
        for (Index d = 0; d < cols; ++d) u.feats(t, d) = feats[t][d].get<double>();
      }
      if (!is_eos_terminated(u.tokens)) throw DataError("tokens are not EOS-terminated");
      out.push_back(std::move(u));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::vector<TokenSeq>& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : text) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
}

std::vector<TokenSeq> read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<TokenSeq> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenSeq s;
    TokenId w = 0;
    while (ls >> w) s.push_back(w);
    if (!ls.eof()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-integer token");
    if (!is_eos_terminated(s)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": not EOS-terminated");
    out.push_back(std::move(s));
  }
  return out;
}

void write_vocab(const std::filesystem::path& path, const std::vector<std::string>& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : vocab) out << s << '\n';
}

std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  write_utterances(dir / "train.jsonl", ds.train);
  write_utterances(dir / "dev.jsonl", ds.dev);
  write_utterances(dir / "test.jsonl", ds.test);
  write_text(dir / "text.txt", ds.text_only);
  write_vocab(dir / "vocab.txt", ds.vocab);
}

}  // namespace seqfuse
