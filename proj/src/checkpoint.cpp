#include "seqfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace seqfuse {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'F', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void put_f64(std::string& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    take(&v, 8);
    return v;
  }
  double f64() {
    double v;
    take(&v, 8);
    return v;
  }
  std::string str(std::uint64_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint string length out of range");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::capture(const ParameterList& params, nlohmann::json metadata) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto& p : params) {
    Entry e;
    e.name = p.name;
    for (auto d : p.tensor.shape()) e.extents.push_back(d);
    const MatX& v = p.tensor.value();
    e.values.reserve(static_cast<std::size_t>(v.size()));
    for (Index r = 0; r < v.rows(); ++r)
      for (Index c = 0; c < v.cols(); ++c) e.values.push_back(v(r, c));
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

void Checkpoint::restore(ParameterList& params) const {
  std::set<std::string> want, have;
  for (const auto& p : params) want.insert(p.name);
  for (const auto& e : entries) have.insert(e.name);
  std::string missing, extra;
  for (const auto& n : want)
    if (!have.count(n)) missing += (missing.empty() ? "" : ", ") + n;
  for (const auto& n : have)
    if (!want.count(n)) extra += (extra.empty() ? "" : ", ") + n;
  if (!missing.empty() || !extra.empty())
    throw CheckpointError("checkpoint does not match the model architecture; missing: [" + missing + "], extra: [" +
                          extra + "]");

  auto extents_str = [](const std::vector<std::uint64_t>& ext) {
    std::string s;
    for (std::size_t i = 0; i < ext.size(); ++i) s += (i ? "x" : "") + std::to_string(ext[i]);
    return s;
  };
  std::vector<const Entry*> matched;
  std::string mismatched;
  for (const auto& p : params) {
    const Entry* e = nullptr;
    for (const auto& x : entries)
      if (x.name == p.name) e = &x;
    std::vector<std::uint64_t> shape;
    for (auto d : p.tensor.shape()) shape.push_back(d);
    if (e->extents != shape)
      mismatched += (mismatched.empty() ? "" : ", ") + p.name + " (" + extents_str(e->extents) + " vs model " +
                    extents_str(shape) + ")";
    matched.push_back(e);
  }
  if (!mismatched.empty()) throw CheckpointError("checkpoint shapes do not match the model: " + mismatched);
  for (std::size_t i = 0; i < params.size(); ++i) {
    MatX& v = params[i].tensor.value();
    std::size_t k = 0;
    for (Index r = 0; r < v.rows(); ++r)
      for (Index c = 0; c < v.cols(); ++c) v(r, c) = matched[i]->values[k++];
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, 4);
  put_u64(out, entries.size());
  for (const auto& e : entries) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.extents.size());
    for (auto d : e.extents) put_u64(out, d);
    for (double v : e.values) put_f64(out, v);
  }
  const std::string meta = metadata.dump();
  put_u64(out, meta.size());
  out += meta;
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4);
  Checkpoint ck;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str(r.u64());
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw CheckpointError("implausible rank in entry " + e.name);
    std::uint64_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      e.extents.push_back(r.u64());
      n *= e.extents.back();
    }
    if (n > bytes.size() / 8) throw CheckpointError("entry " + e.name + " larger than the file");
    e.values.resize(n);
    for (auto& v : e.values) v = r.f64();
    ck.entries.push_back(std::move(e));
  }
  const std::string meta = r.str(r.u64());
  try {
    ck.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + ex.what());
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint metadata");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace seqfuse
