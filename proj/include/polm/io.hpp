#pragma once

#include <string>

#include "polm/network.hpp"
#include "polm/raster.hpp"

namespace polm::io {

// PFR planar float raster:
//   "PFR1" | u32 height | u32 width | u32 channels |
//   channels*height*width float32 payload | u32 trailer length | JSON trailer.
// All integers and floats little-endian; the trailer carries channel labels.
Raster read_pfr(const std::string& path);
void write_pfr(const std::string& path, const Raster& raster);

// Binary PGM (P5) / PPM (P6), maxval <= 65535, scaled to [0, 1].
Raster read_pnm(const std::string& path);

// 8-bit P5 preview with per-image min/max scaling of the given plane.
void write_pgm_preview(const std::string& path, const double* plane, int H, int W);

// PMCK checkpoint: config, normalization stats, float64 parameters,
// optimizer state, epoch counter and loss history. Round trips bit-exactly.
void save_checkpoint(const std::string& path, const net::Checkpoint& ckpt);
net::Checkpoint load_checkpoint(const std::string& path);

}  // namespace polm::io
