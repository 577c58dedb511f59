#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sdinet/nn.hpp"
#include "sdinet/tensor.hpp"

// Binary layout, all integers little-endian:
//   "SDIN" | u32 version | u64 meta_len | meta_len bytes of "key=value\n" lines
//   | u64 tensor_count | tensor_count x (u32 name_len | name | u32 rank
//   | rank x u64 dim | u8 dtype (0 = f32, 1 = f64) | IEEE-754 LE payload)
namespace sdinet {

inline constexpr char kCheckpointMagic[4] = {'S', 'D', 'I', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::F32;
  std::vector<double> values;  // exact for both dtypes
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> metadata;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  void put(NamedTensor tensor);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Raises CheckpointError on bad magic, unknown version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

template <class T>
void export_params(const nn::ParamRegistry<T>& params, Checkpoint& ckpt,
                   const std::string& prefix = "param.");

/// Copies tensors into the registry. Missing tensors and shape mismatches
/// raise CheckpointError naming the tensor.
template <class T>
void import_params(nn::ParamRegistry<T>& params, const Checkpoint& ckpt,
                   const std::string& prefix = "param.");

}  // namespace sdinet
