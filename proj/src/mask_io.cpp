#include <istream>
#include <ostream>

#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim::metrics {

void write_mask(std::ostream& out, const Mask3D& mask) {
  out.write("FCM1", 4);
  for (auto d : mask.dims()) io::write_u32(out, static_cast<std::uint32_t>(d));
  for (double s : mask.spacing()) io::write_f64(out, s);
  for (std::size_t i = 0; i < mask.voxel_count(); ++i) out.put(mask.test(i) ? 1 : 0);
}

Mask3D read_mask(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "FCM1") throw DataError("not a mask file (bad magic)");
  std::array<std::size_t, 3> dims{};
  for (auto& d : dims) d = io::read_u32(in);
  std::array<double, 3> spacing{};
  for (auto& s : spacing) s = io::read_f64(in);
  Mask3D mask(dims, spacing);
  for (std::size_t i = 0; i < mask.voxel_count(); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw DataError("truncated mask file");
    if (c != 0 && c != 1) throw DataError("mask voxel byte must be 0 or 1");
    mask.set_linear(i, c == 1);
  }
  return mask;
}

}  // namespace fedsim::metrics
