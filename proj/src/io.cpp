#include "dct/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace dct {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

constexpr char kDataMagic[8] = {'D', 'C', 'T', 'D', 'A', 'T', 'A', '1'};
constexpr char kPairMagic[8] = {'D', 'C', 'T', 'P', 'A', 'I', 'R', '1'};
constexpr char kModelMagic[8] = {'D', 'C', 'T', 'M', 'O', 'D', 'L', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kDigestBytes = 32;

std::string sha256_raw(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  return std::string(reinterpret_cast<const char*>(md), len);
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void matrix(const Eigen::MatrixXd& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
  }
  std::string finish() {
    buf_ += sha256_raw(buf_);
    return std::move(buf_);
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char (&magic)[8], const char* what)
      : what_(what) {
    if (bytes.size() < 8 + sizeof(std::uint32_t) + kDigestBytes)
      throw FormatError(std::string(what) + ": file too short");
    const std::string_view body = bytes.substr(0, bytes.size() - kDigestBytes);
    if (sha256_raw(body) != bytes.substr(bytes.size() - kDigestBytes))
      throw FormatError(std::string(what) + ": content hash mismatch");
    data_ = body;
    if (data_.substr(0, 8) != std::string_view(magic, 8))
      throw FormatError(std::string(what) + ": bad magic bytes");
    pos_ = 8;
    const auto v = get<std::uint32_t>();
    if (v != kVersion)
      throw FormatError(std::string(what) + ": unsupported version " + std::to_string(v));
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Eigen::MatrixXd matrix() {
    const auto r = get<std::uint64_t>();
    const auto c = get<std::uint64_t>();
    if (c != 0 && r > (data_.size() - pos_) / sizeof(double) / c)
      throw FormatError(std::string(what_) + ": matrix larger than file");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    return m;
  }
  void expect_end() const {
    if (pos_ != data_.size()) throw FormatError(std::string(what_) + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw FormatError(std::string(what_) + ": truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  const char* what_;
};

void put_gaussian(Writer& w, const GaussianParams& g) {
  w.matrix(g.mean);
  w.matrix(g.cov);
}

GaussianParams get_gaussian(Reader& r) {
  GaussianParams g;
  g.mean = r.matrix();
  g.cov = r.matrix();
  return g;
}

void put_params(Writer& w, const DistributionParams& p) {
  if (const auto* g = std::get_if<GaussianParams>(&p)) {
    w.put<std::uint8_t>(0);
    put_gaussian(w, *g);
  } else {
    const auto& m = std::get<GMMParams>(p);
    w.put<std::uint8_t>(1);
    w.matrix(m.weights);
    w.put<std::uint64_t>(m.components.size());
    for (const auto& c : m.components) put_gaussian(w, c);
  }
}

DistributionParams get_params(Reader& r) {
  const auto kind = r.get<std::uint8_t>();
  if (kind == 0) return get_gaussian(r);
  if (kind != 1) throw FormatError("unknown distribution kind");
  GMMParams m;
  m.weights = r.matrix();
  const auto c = r.get<std::uint64_t>();
  if (c > 1024) throw FormatError("implausible component count");
  for (std::uint64_t i = 0; i < c; ++i) m.components.push_back(get_gaussian(r));
  return m;
}

void put_sets(Writer& w, const std::vector<SampleSet>& sets,
              const std::vector<DistributionParams>& params) {
  w.put<std::uint64_t>(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    put_params(w, params[i]);
    w.matrix(sets[i].points());
  }
}

void get_sets(Reader& r, std::vector<SampleSet>& sets,
              std::vector<DistributionParams>& params) {
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    params.push_back(get_params(r));
    sets.emplace_back(r.matrix());
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  const std::string raw = sha256_raw(bytes);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : raw) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

std::string serialize_dataset(const Dataset& d) {
  d.validate();
  Writer w;
  w.raw(kDataMagic, 8);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.dim()));
  w.put<std::uint64_t>(d.size());
  w.put<std::uint64_t>(d.K);
  w.put<std::uint64_t>(d.prior_hash);
  w.put<std::uint64_t>(d.seed);
  w.put<std::uint8_t>(d.truncated ? 1 : 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    w.put<std::uint64_t>(d.unique_id[i]);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(d.tags[i]));
    put_params(w, d.params[i]);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(d.sets[i].size()));
    const auto& pts = d.sets[i].points();
    for (Eigen::Index r = 0; r < pts.rows(); ++r)
      for (Eigen::Index c = 0; c < pts.cols(); ++c) w.put<double>(pts(r, c));
  }
  return w.finish();
}

Dataset deserialize_dataset(std::string_view bytes) {
  Reader r(bytes, kDataMagic, "dataset");
  Dataset d;
  const auto dim = r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  d.K = r.get<std::uint64_t>();
  d.prior_hash = r.get<std::uint64_t>();
  d.seed = r.get<std::uint64_t>();
  d.truncated = r.get<std::uint8_t>() != 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    d.unique_id.push_back(r.get<std::uint64_t>());
    const auto tag = r.get<std::uint8_t>();
    if (tag > 2) throw FormatError("dataset: bad time tag");
    d.tags.push_back(static_cast<TimeTag>(tag));
    d.params.push_back(get_params(r));
    const auto rows = r.get<std::uint64_t>();
    if (dim == 0 || rows > bytes.size() / sizeof(double) / dim)
      throw FormatError("dataset: set larger than file");
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows), dim);
    for (Eigen::Index a = 0; a < pts.rows(); ++a)
      for (Eigen::Index c = 0; c < pts.cols(); ++c) pts(a, c) = r.get<double>();
    d.sets.emplace_back(std::move(pts));
  }
  r.expect_end();
  d.validate();
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& p) {
  write_file(p, serialize_dataset(d));
}

Dataset load_dataset(const std::filesystem::path& p) { return deserialize_dataset(read_file(p)); }

std::string serialize_paired(const PairedDataset& d) {
  d.validate();
  Writer w;
  w.raw(kPairMagic, 8);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.spec.kind));
  w.matrix(d.spec.shift);
  w.matrix(d.spec.offaxis);
  put_sets(w, d.sources, d.source_params);
  put_sets(w, d.targets, d.target_params);
  return w.finish();
}

PairedDataset deserialize_paired(std::string_view bytes) {
  Reader r(bytes, kPairMagic, "paired dataset");
  PairedDataset d;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError("paired dataset: bad pair kind");
  d.spec.kind = static_cast<PairKind>(kind);
  d.spec.shift = r.matrix();
  d.spec.offaxis = r.matrix();
  get_sets(r, d.sources, d.source_params);
  get_sets(r, d.targets, d.target_params);
  r.expect_end();
  d.validate();
  return d;
}

std::string serialize_model(TransportModel& m) {
  const ModelConfig& c = m.config();
  Writer w;
  w.raw(kModelMagic, 8);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.generator));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.conditioning));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(c.encoder.input_dim));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(c.encoder.hidden));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(c.encoder.latent));
  w.put<std::int32_t>(c.encoder.pool_blocks);
  w.put<std::uint8_t>(c.encoder.normalize ? 1 : 0);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(c.map_hidden));
  w.put<std::uint64_t>(c.onehot_K);
  w.put<std::int32_t>(c.swd_projections);
  w.put<double>(c.fm_sigma);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(c.noise_dim));
  w.put<double>(c.ode.atol);
  w.put<double>(c.ode.rtol);
  w.put<double>(c.ode.initial_step);
  w.put<std::int64_t>(c.ode.max_steps);
  const auto params = m.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str(p->name);
    w.matrix(p->value);
  }
  w.put<std::uint64_t>(m.onehot.centroids.size());
  for (const auto& c2 : m.onehot.centroids) w.matrix(c2);
  return w.finish();
}

TransportModel deserialize_model(std::string_view bytes) {
  Reader r(bytes, kModelMagic, "model");
  ModelConfig c;
  const auto gen = r.get<std::uint8_t>();
  const auto cond = r.get<std::uint8_t>();
  if (gen > 3 || cond > 2) throw FormatError("model: bad generator or conditioning tag");
  c.generator = static_cast<GeneratorKind>(gen);
  c.conditioning = static_cast<Conditioning>(cond);
  c.encoder.input_dim = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  c.encoder.hidden = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  c.encoder.latent = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  c.encoder.pool_blocks = r.get<std::int32_t>();
  c.encoder.normalize = r.get<std::uint8_t>() != 0;
  c.map_hidden = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  c.onehot_K = r.get<std::uint64_t>();
  c.swd_projections = r.get<std::int32_t>();
  c.fm_sigma = r.get<double>();
  c.noise_dim = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  c.ode.atol = r.get<double>();
  c.ode.rtol = r.get<double>();
  c.ode.initial_step = r.get<double>();
  c.ode.max_steps = r.get<std::int64_t>();
  TransportModel m(c, 0);
  const auto params = m.parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size())
    throw FormatError("model: parameter count " + std::to_string(count) +
                      " does not match the architecture (" +
                      std::to_string(params.size()) + ")");
  for (Parameter* p : params) {
    const std::string name = r.str();
    if (name != p->name) throw FormatError("model: expected parameter " + p->name + ", got " + name);
    Eigen::MatrixXd v = r.matrix();
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw FormatError("model: shape mismatch for " + name);
    p->value = std::move(v);
    p->zero_grad();
  }
  const auto nc = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nc; ++i) m.onehot.centroids.push_back(r.matrix());
  r.expect_end();
  return m;
}

void save_model(TransportModel& m, const std::filesystem::path& p) {
  write_file(p, serialize_model(m));
}

TransportModel load_model(const std::filesystem::path& p) {
  return deserialize_model(read_file(p));
}

}  // namespace dct
