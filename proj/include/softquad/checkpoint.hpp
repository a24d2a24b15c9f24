#pragma once

// Self-describing binary container for networks, optimizer state and scalars.
//
// Layout (little-endian):
//   "SQCK" u32 version u32 dtype_bytes u32 section_count
//   per section: u32 name_len, name, u32 kind, body
//     kind 0 (network): u32 n_layers, u32 widths[n+1], u8 activation[n],
//                       per layer W (column-major) then b, as dtype
//     kind 1 (scalars): u32 count, f64 values[count]
//   u32 crc32 of all preceding bytes

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "softquad/nn.hpp"

namespace softquad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
class Checkpoint {
 public:
  void put_network(const std::string& name, const nn::Mlp<T>& net);
  void put_scalars(const std::string& name, const std::vector<double>& values);
  /// Stores the moment estimates as two networks plus the step and rate.
  void put_adam(const std::string& name, const nn::AdamState<T>& opt, const nn::Mlp<T>& shape);

  const nn::Mlp<T>& network(const std::string& name) const;
  const std::vector<double>& scalars(const std::string& name) const;
  nn::AdamState<T> adam(const std::string& name) const;
  bool has_network(const std::string& name) const { return networks_.count(name) > 0; }
  bool has_scalars(const std::string& name) const { return scalars_.count(name) > 0; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, nn::Mlp<T>> networks_;
  std::map<std::string, std::vector<double>> scalars_;
};

std::uint32_t checksum(const std::uint8_t* data, std::size_t n);

}  // namespace softquad
