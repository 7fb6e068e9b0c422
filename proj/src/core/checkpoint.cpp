#include "skb/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace skb {
namespace {

constexpr char kMagic[8] = {'S', 'K', 'B', 'C', 'K', 'P', 'T', '1'};

template <typename U>
void put_le(std::vector<char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  const std::string header = ckpt.header.dump();
  put_le<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    if (r.name.size() > 0xFFFF) throw FormatError("record name too long: " + r.name.substr(0, 32));
    if (shape_size(r.shape) != r.data.size())
      throw DimensionError("record '" + r.name + "' data does not fill " + shape_str(r.shape));
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
    for (auto e : r.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (float v : r.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  Reader in(bytes);
  in.get_string(sizeof(kMagic));
  Checkpoint ckpt;
  const auto header_len = in.get_le<std::uint64_t>();
  const std::size_t header_at = in.pos();
  const std::string header = in.get_string(header_len);
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), header_at + e.byte);
  }
  const auto count = in.get_le<std::uint32_t>();
  ckpt.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    r.name = in.get_string(in.get_le<std::uint16_t>());
    const auto rank = in.get_le<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) r.shape.push_back(in.get_le<std::uint32_t>());
    r.data.resize(shape_size(r.shape));
    for (auto& v : r.data) v = std::bit_cast<float>(in.get_le<std::uint32_t>());
    ckpt.records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint records");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint", path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint", path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

namespace {

template <typename T>
TensorRecord to_record(const std::string& name, const Tensor<T>& t) {
  return TensorRecord{name, t.shape(), std::vector<float>(t.vec().begin(), t.vec().end())};
}

template <typename T>
void assign(Tensor<T>& dst, const TensorRecord& r) {
  if (dst.shape() != r.shape) {
    throw ConfigError("checkpoint record '" + r.name + "' has shape " + shape_str(r.shape) + ", expected " +
                      shape_str(dst.shape()));
  }
  std::copy(r.data.begin(), r.data.end(), dst.vec().begin());
}

}  // namespace

template <typename T>
void append_parameters(Checkpoint& ckpt, const ParameterStore<T>& store) {
  for (const auto& p : store) ckpt.records.push_back(to_record(p.name, p.value));
}

template <typename T>
void append_optimizer(Checkpoint& ckpt, const Adam<T>& adam) {
  for (const auto& [name, st] : adam.states()) {
    ckpt.records.push_back(to_record("adam.m/" + name, st.first_moment));
    ckpt.records.push_back(to_record("adam.v/" + name, st.second_moment));
  }
  ckpt.header["adam_step"] = adam.steps();
}

template <typename T>
std::size_t load_parameters(const Checkpoint& ckpt, ParameterStore<T>& store) {
  std::size_t loaded = 0;
  for (const auto& r : ckpt.records) {
    if (auto* p = store.find(r.name)) {
      assign(p->value, r);
      ++loaded;
    }
  }
  return loaded;
}

template <typename T>
void load_optimizer(const Checkpoint& ckpt, const ParameterStore<T>& store, Adam<T>& adam) {
  const std::uint64_t steps = ckpt.header.value("adam_step", std::uint64_t{0});
  for (const auto& p : store) {
    const auto* m = ckpt.find("adam.m/" + p.name);
    const auto* v = ckpt.find("adam.v/" + p.name);
    if (!m || !v) continue;
    AdamState<T> st(p.value.shape(), adam.config());
    assign(st.first_moment, *m);
    assign(st.second_moment, *v);
    st.step_count = steps;
    adam.states().insert_or_assign(p.name, std::move(st));
  }
  adam.set_steps(steps);
}

template void append_parameters<float>(Checkpoint&, const ParameterStore<float>&);
template void append_parameters<double>(Checkpoint&, const ParameterStore<double>&);
template void append_optimizer<float>(Checkpoint&, const Adam<float>&);
template void append_optimizer<double>(Checkpoint&, const Adam<double>&);
template std::size_t load_parameters<float>(const Checkpoint&, ParameterStore<float>&);
template std::size_t load_parameters<double>(const Checkpoint&, ParameterStore<double>&);
template void load_optimizer<float>(const Checkpoint&, const ParameterStore<float>&, Adam<float>&);
template void load_optimizer<double>(const Checkpoint&, const ParameterStore<double>&, Adam<double>&);

}  // namespace skb
