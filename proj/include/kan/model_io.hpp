#ifndef KAN_MODEL_IO_HPP
#define KAN_MODEL_IO_HPP

#include "kan/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kan {

// Binary model container (.kan), little-endian, version 1:
//   magic "KANM", u32 version
//   u32 width count, u32 widths[]
//   u32 degree, u32 grid intervals, f64 grid lo, f64 grid hi
//   u64 seed, f64 split fraction, u64 training-data fingerprint
//   u8 standardizer flag; if set: u32 feature count, f64 means[],
//      f64 stddevs[], f64 squash scale
//   per layer, edges row-major (output index outer, input index inner):
//      f64 coeffs[basis count], f64 w_spline, f64 w_base
//   u64 FNV-1a checksum of every preceding byte
// Round-trips are bit-exact.
std::vector<std::uint8_t> save_model(const KanNetwork& net);
KanNetwork load_model(const std::vector<std::uint8_t>& bytes);

void save_model_file(const KanNetwork& net, const std::string& path);
KanNetwork load_model_file(const std::string& path);

// Atomic file write used by every artifact emitter: write to a sibling
// temp file, then rename over the target.
void write_file_atomic(const std::string& path, const void* data, std::size_t size);
void write_file_atomic(const std::string& path, const std::string& text);

} // namespace kan

#endif
