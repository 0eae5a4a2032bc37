#include "glalab/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace glalab {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'A', 'L', 'A', 'B', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const Eigen::VectorXd& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_raw(os, kVersion);
  write_raw(os, static_cast<std::uint32_t>(cfg.variant));
  write_raw(os, static_cast<std::uint32_t>(cfg.layers));
  write_raw(os, static_cast<std::uint32_t>(cfg.d));
  write_raw(os, static_cast<std::uint32_t>(cfg.p));
  write_raw(os, static_cast<std::uint32_t>(cfg.K()));
  write_raw(os, static_cast<std::uint64_t>(params.size()));
  os.write(reinterpret_cast<const char*>(params.data()),
           static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file");
  const auto version = read_raw<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.variant = static_cast<Variant>(read_raw<std::uint32_t>(is));
  ck.layers = static_cast<int>(read_raw<std::uint32_t>(is));
  ck.d = static_cast<int>(read_raw<std::uint32_t>(is));
  ck.p = static_cast<int>(read_raw<std::uint32_t>(is));
  ck.K = static_cast<int>(read_raw<std::uint32_t>(is));
  const auto count = read_raw<std::uint64_t>(is);
  ck.params.resize(static_cast<Eigen::Index>(count));
  is.read(reinterpret_cast<char*>(ck.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return ck;
}

}  // namespace glalab
