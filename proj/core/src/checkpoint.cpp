#include "pcbdet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace pcbdet {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'B', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(static_cast<bool>(in), "checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint_stream(std::ostream& out, const StateMap& state) {
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, kCheckpointVersion);
  write_pod<uint64_t>(out, state.size());
  for (const auto& [path, entry] : state) {
    check(shape_numel(entry.shape) ==
              static_cast<int64_t>(entry.values.size()),
          "checkpoint: entry '" + path + "' shape/value mismatch");
    write_pod<uint32_t>(out, static_cast<uint32_t>(path.size()));
    out.write(path.data(), static_cast<std::streamsize>(path.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(entry.shape.size()));
    for (int64_t d : entry.shape) write_pod<int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(entry.values.data()),
              static_cast<std::streamsize>(entry.values.size() *
                                           sizeof(double)));
  }
  check(static_cast<bool>(out), "checkpoint: write failed");
}

StateMap load_checkpoint_stream(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  check(static_cast<bool>(in) && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
        "checkpoint: bad magic, not a checkpoint file");
  const uint32_t version = read_pod<uint32_t>(in);
  check(version == kCheckpointVersion,
        "checkpoint: unsupported format version " + std::to_string(version));
  const uint64_t count = read_pod<uint64_t>(in);
  StateMap state;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t path_len = read_pod<uint32_t>(in);
    std::string path(path_len, '\0');
    in.read(path.data(), path_len);
    check(static_cast<bool>(in), "checkpoint: truncated path");
    const uint32_t ndim = read_pod<uint32_t>(in);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int64_t>(in);
    const int64_t numel = shape_numel(shape);
    check(numel >= 0, "checkpoint: negative extent in '" + path + "'");
    std::vector<double> values(numel);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    check(static_cast<bool>(in), "checkpoint: truncated values for '" + path + "'");
    check(state.emplace(path, CheckpointEntry{std::move(shape),
                                              std::move(values)})
              .second,
          "checkpoint: duplicate entry '" + path + "'");
  }
  return state;
}

void save_checkpoint(const std::string& path, const StateMap& state) {
  std::ofstream out(path, std::ios::binary);
  check(out.is_open(), "checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint_stream(out, state);
}

StateMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.is_open(), "checkpoint: cannot open '" + path + "'");
  return load_checkpoint_stream(in);
}

}  // namespace pcbdet
