#include "convkit/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "convkit/text.hpp"

namespace convkit::nn {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) throw CheckpointError("corrupt payload: truncated checkpoint");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    if (pos_ + n > b_.size()) throw CheckpointError("corrupt payload: truncated checkpoint");
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  std::vector<std::size_t> shape;
};

std::vector<Entry> read_header(Reader& r) {
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("corrupt payload: bad magic");
  auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  auto n = r.get<std::uint32_t>();
  std::vector<Entry> entries(n);
  for (auto& e : entries) {
    auto len = r.get<std::uint32_t>();
    e.name = std::string(r.bytes(len));
    auto nd = r.get<std::uint32_t>();
    if (nd > 8) throw CheckpointError("corrupt payload: bad rank");
    for (std::uint32_t k = 0; k < nd; ++k) e.shape.push_back(r.get<std::uint64_t>());
  }
  return entries;
}

void read_payload(Reader& r, const std::vector<Entry>& entries, std::vector<Tensor*> dst) {
  std::size_t total = 0;
  for (const auto& e : entries) total += shape_size(e.shape);
  auto payload = r.bytes(total * sizeof(double));
  auto sum = r.get<std::uint64_t>();
  if (sum != text::fnv1a(payload)) throw CheckpointError("corrupt payload: checksum mismatch");
  if (!r.done()) throw CheckpointError("corrupt payload: trailing bytes");
  std::size_t off = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = *dst[i];
    std::memcpy(t.data.data(), payload.data() + off, t.size() * sizeof(double));
    off += t.size() * sizeof(double);
  }
}

}  // namespace

std::string save_params(const ParamStore& store) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.count()));
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto& p = store.at(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (auto d : p.value.shape) put<std::uint64_t>(out, d);
  }
  std::string payload;
  for (std::size_t i = 0; i < store.count(); ++i) {
    for (double x : store.at(i).value.data) put<double>(payload, x);
  }
  out += payload;
  put<std::uint64_t>(out, text::fnv1a(payload));
  return out;
}

ParamStore load_params(std::string_view bytes) {
  Reader r(bytes);
  auto entries = read_header(r);
  ParamStore store;
  std::vector<Tensor*> dst;
  for (const auto& e : entries) {
    auto& p = store.add_zeros(e.name, e.shape);
    dst.push_back(&p.value);
  }
  read_payload(r, entries, dst);
  return store;
}

void load_params_into(ParamStore& store, std::string_view bytes) {
  Reader r(bytes);
  auto entries = read_header(r);
  if (entries.size() != store.count()) throw CheckpointError("checkpoint does not match the model layout");
  std::vector<Tensor*> dst;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = store.at(i);
    if (p.name != entries[i].name || p.value.shape != entries[i].shape) {
      throw CheckpointError("checkpoint parameter '" + entries[i].name + "' " + shape_str(entries[i].shape) +
                            " does not match model parameter '" + p.name + "' " + shape_str(p.value.shape));
    }
    dst.push_back(&p.value);
  }
  read_payload(r, entries, dst);
}

nlohmann::json params_to_json(const ParamStore& store) {
  nlohmann::json j = nlohmann::json::object();
  j["version"] = kCheckpointVersion;
  j["params"] = nlohmann::json::array();
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto& p = store.at(i);
    j["params"].push_back({{"name", p.name}, {"shape", p.value.shape}, {"values", p.value.data}});
  }
  return j;
}

}  // namespace convkit::nn
