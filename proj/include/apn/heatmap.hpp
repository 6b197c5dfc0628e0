#ifndef APN_HEATMAP_HPP
#define APN_HEATMAP_HPP

#include <string>
#include <vector>

#include "apn/eval.hpp"
#include "apn/model.hpp"

namespace apn {

// Binary PGM (P5) of a min-max normalized map; a constant map writes all
// zeros rather than dividing by zero.
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& map);

// Binary PPM (P6) of a [3,H,W] image in [0,1], with an optional box outline
// drawn in red.
template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image, const PartBox* box);

// Per attribute: `attr_<k>_heat.pgm` (upsampled, normalized similarity map)
// and `attr_<k>_box.ppm` (input image with the peak box). Returns the file
// paths written.
template <typename T>
std::vector<std::string> export_heatmaps(const model::ForwardTrace<T>& trace,
                                         const Tensor<T>& image, const std::string& dir,
                                         const std::vector<int>& attributes, double rho,
                                         const PartBox* object_box);

}  // namespace apn

#endif
