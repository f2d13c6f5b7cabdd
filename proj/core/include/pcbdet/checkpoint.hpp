#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  Shape shape;
  std::vector<double> values;
};

// Ordered by path so serialization is byte-deterministic.
using StateMap = std::map<std::string, CheckpointEntry>;

// Flat binary container: magic, format version, then path -> shape -> raw
// little-endian doubles per entry. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const StateMap& state);
StateMap load_checkpoint(const std::string& path);

void save_checkpoint_stream(std::ostream& out, const StateMap& state);
StateMap load_checkpoint_stream(std::istream& in);

}  // namespace pcbdet
