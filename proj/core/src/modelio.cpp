#include "cta/modelio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

namespace cta {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'T', 'W', 'S'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 4;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return bits;
}

DType parse_dtype(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw FormatError(fmt::format("unknown dtype '{}'", s));
}

Matrix<double> round_to(DType dtype, Matrix<double> m) {
  if (dtype == DType::f32) {
    for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
  }
  return m;
}

}  // namespace

std::string_view to_string(DType t) noexcept { return t == DType::f32 ? "f32" : "f64"; }

void WeightStore::put(const std::string& name, Matrix<double> values) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    throw FormatError(fmt::format("invalid tensor name '{}'", name));
  }
  if (!all_finite<double>(values.data())) {
    throw DataError(fmt::format("tensor '{}' holds non-finite values", name));
  }
  values = round_to(dtype_, std::move(values));
  if (const auto it = index_.find(name); it != index_.end()) {
    tensors_[it->second].values = std::move(values);
    return;
  }
  index_.emplace(name, tensors_.size());
  tensors_.push_back({name, std::move(values)});
}

void WeightStore::put(const std::string& name, const Vector<double>& values) {
  put(name, Matrix<double>::from_row(values.span()));
}

bool WeightStore::contains(std::string_view name) const { return index_.contains(name); }

std::vector<std::string> WeightStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& e : tensors_) out.push_back(e.name);
  return out;
}

std::vector<TensorInfo> WeightStore::manifest() const {
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  for (const auto& e : tensors_) {
    TensorInfo info{e.name, dtype_, e.values.rows(), e.values.cols(), offset};
    offset += info.bytes();
    out.push_back(std::move(info));
  }
  return out;
}

const Matrix<double>& WeightStore::raw(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw MissingTensorError(std::string(name));
  return tensors_[it->second].values;
}

bool operator==(const WeightStore& a, const WeightStore& b) {
  if (a.dtype_ != b.dtype_ || a.activation_ != b.activation_ ||
      a.tensors_.size() != b.tensors_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.name != y.name || x.values.rows() != y.values.rows() ||
        x.values.cols() != y.values.cols()) {
      return false;
    }
    // Bitwise comparison so that signed zeros and payloads count.
    if (std::memcmp(x.values.data().data(), y.values.data().data(),
                    x.values.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> serialize_weights(const WeightStore& store) {
  const auto entries = store.manifest();
  std::string manifest = fmt::format("activation {}\n", store.activation());
  for (const auto& e : entries) {
    manifest += fmt::format("tensor {} {} {} {} {}\n", e.name, to_string(e.dtype), e.rows, e.cols,
                            e.offset);
  }
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const auto& e : entries) {
    const Matrix<double>& m = store.raw(e.name);
    for (double v : m.data()) {
      if (e.dtype == DType::f32) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

WeightStore parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("not a CTWS weight file");
  }
  if (bytes[4] != kVersion) {
    throw FormatError(fmt::format("unsupported weight file version {}", bytes[4]));
  }
  const std::size_t manifest_len = get_le<std::uint32_t>(bytes.data() + 5);
  if (kHeaderBytes + manifest_len > bytes.size()) throw FormatError("truncated manifest");
  const std::string manifest(reinterpret_cast<const char*>(bytes.data()) + kHeaderBytes,
                             manifest_len);
  const auto blob = bytes.subspan(kHeaderBytes + manifest_len);

  std::string activation = "gelu";
  std::vector<TensorInfo> entries;
  std::istringstream in(manifest);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "activation") {
      if (!(ls >> activation)) throw FormatError(fmt::format("manifest line {}: activation", line_no));
    } else if (kind == "tensor") {
      TensorInfo info;
      std::string dtype;
      if (!(ls >> info.name >> dtype >> info.rows >> info.cols >> info.offset)) {
        throw FormatError(fmt::format("manifest line {}: malformed tensor entry", line_no));
      }
      info.dtype = parse_dtype(dtype);
      entries.push_back(std::move(info));
    } else {
      throw FormatError(fmt::format("manifest line {}: unknown entry '{}'", line_no, kind));
    }
    std::string extra;
    if (ls >> extra) throw FormatError(fmt::format("manifest line {}: trailing '{}'", line_no, extra));
  }

  if (entries.empty()) return WeightStore(DType::f64, activation);
  const DType dtype = entries.front().dtype;
  std::set<std::string, std::less<>> seen;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& e : entries) {
    if (e.dtype != dtype) throw FormatError(fmt::format("mixed dtypes: '{}' is {}", e.name, to_string(e.dtype)));
    if (!seen.insert(e.name).second) throw FormatError(fmt::format("duplicate tensor '{}'", e.name));
    if (e.offset > blob.size() || e.bytes() > blob.size() - e.offset) {
      throw FormatError(fmt::format("tensor '{}' spans [{}, {}) beyond blob of {} bytes", e.name,
                                    e.offset, e.offset + e.bytes(), blob.size()));
    }
    spans.emplace_back(e.offset, e.offset + e.bytes());
  }
  std::ranges::sort(spans);
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) throw FormatError("overlapping tensor offsets");
  }

  WeightStore store(dtype, activation);
  for (const auto& e : entries) {
    Matrix<double> m(e.rows, e.cols);
    const std::uint8_t* p = blob.data() + e.offset;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (dtype == DType::f32) {
        m.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
      } else {
        m.data()[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
      }
    }
    if (!all_finite<double>(m.data())) {
      throw DataError(fmt::format("tensor '{}' holds non-finite values", e.name));
    }
    store.put(e.name, std::move(m));
  }
  return store;
}

void save_weights(const std::filesystem::path& path, const WeightStore& store) {
  const auto bytes = serialize_weights(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(fmt::format("failed writing '{}'", path.string()));
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open weight file '{}'", path.string()));
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return parse_weights(bytes);
}

std::vector<TensorInfo> required_tensors(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d, dh = cfg.d / cfg.heads, dff = cfg.ff_dim();
  std::vector<TensorInfo> out;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    out.push_back({std::move(name), DType::f64, rows, cols, 0});
  };
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const std::string p = fmt::format("block{}.", b);
    for (std::size_t i = 0; i < cfg.heads; ++i) {
      add(fmt::format("{}mha.w_q.{}", p, i), d, dh);
      add(fmt::format("{}mha.w_k.{}", p, i), d, dh);
      add(fmt::format("{}mha.w_v.{}", p, i), d, dh);
    }
    add(p + "mha.w_o", d, d);
    add(p + "ff.w1", d, dff);
    add(p + "ff.b1", 1, dff);
    add(p + "ff.w2", dff, d);
    add(p + "ff.b2", 1, d);
    add(p + "ln1.gain", 1, d);
    add(p + "ln1.bias", 1, d);
    add(p + "ln2.gain", 1, d);
    add(p + "ln2.bias", 1, d);
  }
  if (cfg.rpe_kind == RpeKind::learned) add("rpe.table", cfg.rpe_table_size(), d);
  if (cfg.class_token_before) add("cls.token", 1, d);
  return out;
}

WeightStore init_random_weights(const ModelConfig& cfg, std::uint64_t seed, DType dtype) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  WeightStore store(dtype);
  for (const auto& t : required_tensors(cfg)) {
    Matrix<double> m(t.rows, t.cols);
    const bool gain = t.name.ends_with(".gain");
    for (double& v : m.data()) v = (gain ? 1.0 : 0.0) + uniform(rng);
    store.put(t.name, std::move(m));
  }
  return store;
}

}  // namespace cta
