#include "sdinet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sdinet/error.hpp"

namespace sdinet {

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::put(NamedTensor tensor) {
  for (auto& t : tensors) {
    if (t.name == tensor.name) {
      t = std::move(tensor);
      return;
    }
  }
  tensors.push_back(std::move(tensor));
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(in_[pos_++]) << (8 * i);
    return v;
  }
  std::string bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > in_.size() - pos_) {
      throw CheckpointError(std::string("corrupt checkpoint: truncated while reading ") + what);
    }
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::string encode_metadata(const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata entry '" + k + "' cannot be encoded");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

std::map<std::string, std::string> decode_metadata(const std::string& text) {
  std::map<std::string, std::string> meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CheckpointError("corrupt checkpoint: bad metadata line '" + line + "'");
    }
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(ckpt.version);
  const std::string meta = encode_metadata(ckpt.metadata);
  w.u64(meta.size());
  w.bytes(meta);
  w.u64(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != shape_numel(t.shape)) {
      throw CheckpointError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                            " values for shape " + shape_str(t.shape));
    }
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(static_cast<std::uint64_t>(d));
    w.u8(static_cast<std::uint8_t>(t.dtype));
    if (t.dtype == DType::F32) {
      for (double v : t.values) w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      for (double v : t.values) w.u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kCheckpointMagic) {
    if (r.u8("magic") != static_cast<std::uint8_t>(c)) {
      throw CheckpointError("corrupt checkpoint: bad magic");
    }
  }
  Checkpoint ckpt;
  ckpt.version = r.u32("version");
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  const auto meta_len = r.u64("metadata length");
  ckpt.metadata = decode_metadata(r.bytes(meta_len, "metadata"));
  const auto count = r.u64("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.u32("tensor name length");
    t.name = r.bytes(name_len, "tensor name");
    const auto rank = r.u32("tensor rank");
    if (rank > 8) throw CheckpointError("corrupt checkpoint: tensor '" + t.name + "' has rank " + std::to_string(rank));
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.u64("tensor dims");
      if (d > (std::uint64_t(1) << 40)) throw CheckpointError("corrupt checkpoint: tensor '" + t.name + "' has an implausible dim");
      t.shape.push_back(static_cast<std::int64_t>(d));
      numel *= d;
    }
    const auto tag = r.u8("dtype tag");
    if (tag > 1) throw CheckpointError("corrupt checkpoint: tensor '" + t.name + "' has unknown dtype " + std::to_string(tag));
    t.dtype = static_cast<DType>(tag);
    const std::uint64_t width = t.dtype == DType::F32 ? 4 : 8;
    if (numel > r.remaining() / width) {
      throw CheckpointError("corrupt checkpoint: truncated while reading payload of '" + t.name + "'");
    }
    t.values.resize(numel);
    for (auto& v : t.values) {
      v = t.dtype == DType::F32 ? double(std::bit_cast<float>(r.u32("payload")))
                                : std::bit_cast<double>(r.u64("payload"));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

template <class T>
void export_params(const nn::ParamRegistry<T>& params, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& p : params) {
    NamedTensor t;
    t.name = prefix + p.name;
    t.shape = p.tensor.shape();
    t.dtype = dtype_of<T>();
    const auto d = p.tensor.data();
    t.values.assign(d.begin(), d.end());
    ckpt.put(std::move(t));
  }
}

template <class T>
void import_params(nn::ParamRegistry<T>& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& p : params) {
    const std::string name = prefix + p.name;
    const NamedTensor* t = ckpt.find(name);
    if (!t) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (t->shape != p.tensor.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(t->shape) +
                            " but the model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->values[i]);
  }
}

template void export_params<float>(const nn::ParamRegistry<float>&, Checkpoint&, const std::string&);
template void export_params<double>(const nn::ParamRegistry<double>&, Checkpoint&, const std::string&);
template void import_params<float>(nn::ParamRegistry<float>&, const Checkpoint&, const std::string&);
template void import_params<double>(nn::ParamRegistry<double>&, const Checkpoint&, const std::string&);

}  // namespace sdinet
