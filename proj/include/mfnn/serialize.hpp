#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnn/hws.hpp"
#include "mfnn/model.hpp"
#include "mfnn/optim.hpp"
#include "mfnn/tensor.hpp"

namespace mfnn {

std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t seed = 0);

// Little-endian append-only buffer; writes are mirrored by Reader in order.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);
  void tensor(const Tensor& t);
  void bytes(const std::vector<std::uint8_t>& b);

  // Appends crc32 of everything written so far and flushes to disk.
  void save(const std::string& path) const;
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  // Verifies the trailing checksum before any field is read.
  static Reader from_file(const std::string& path);
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32();
  double f64();
  std::string str();
  Tensor tensor();
  std::vector<std::uint8_t> bytes();

  std::size_t offset() const { return at_; }
  bool exhausted() const { return at_ == buf_.size(); }

 private:
  void need(std::size_t n, const char* what);
  std::vector<std::uint8_t> buf_;
  std::size_t at_ = 0;
};

void write_remap_bank(Writer& w, const RemapBank& bank);
RemapBank read_remap_bank(Reader& r);

// Full training state: model structure + weights + BN buffers + optimizer +
// remap banks + epoch counter.
struct Checkpoint {
  std::uint32_t epoch = 0;
  std::int64_t step = 0;
  ArchSpec arch;
  AugSpec aug;
  FamilySpec families;
  QuantSpec quant;
  HwsSpec hws;
  std::uint64_t model_seed = 0;
  bool mutation_done = true;  // all scheduled operator flips applied
};

void save_checkpoint(const std::string& path, const AugModel& m, const SgdOptimizer& opt,
                     const Checkpoint& meta);

struct LoadedCheckpoint {
  Checkpoint meta;
  AugModel model;
  std::vector<Tensor> momentum;
  std::int64_t optimizer_step = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mfnn
