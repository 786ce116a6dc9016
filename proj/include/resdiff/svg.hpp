#ifndef RESDIFF_SVG_HPP
#define RESDIFF_SVG_HPP

#include <string>

#include "resdiff/types.hpp"

namespace resdiff::svg {

// Overlay plot of observation, reconstruction and (when present) ground
// truth, written as a self-contained SVG with plain polylines.
void write_overlay(const std::string& path, const Vec& y, const Vec& xhat, const Vec* x,
                   const std::string& title);

} // namespace resdiff::svg

#endif
