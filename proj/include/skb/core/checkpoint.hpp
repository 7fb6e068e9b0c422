#pragma once

// Checkpoint container:
//
//   "SKBCKPT1"                      8-byte magic
//   u64 header_length               little-endian
//   header                          UTF-8 JSON object (config, step count, ...)
//   u32 record_count
//   per record:
//     u16 name_length, name bytes
//     u8  rank, rank x u32 extents
//     product(extents) x f32        little-endian IEEE-754
//
// Model parameters are stored under their own names; optimizer moments use the
// prefixes "adam.m/" and "adam.v/".

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "skb/core/adam.hpp"
#include "skb/core/parameter.hpp"

namespace skb {

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);

template <typename T>
void append_parameters(Checkpoint& ckpt, const ParameterStore<T>& store);

template <typename T>
void append_optimizer(Checkpoint& ckpt, const Adam<T>& adam);

// Copies every record whose name matches a parameter of `store`. Returns the
// number of parameters loaded. A record whose shape disagrees with the
// parameter raises ConfigError.
template <typename T>
std::size_t load_parameters(const Checkpoint& ckpt, ParameterStore<T>& store);

template <typename T>
void load_optimizer(const Checkpoint& ckpt, const ParameterStore<T>& store, Adam<T>& adam);

}  // namespace skb
