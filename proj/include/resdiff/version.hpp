#ifndef RESDIFF_VERSION_HPP
#define RESDIFF_VERSION_HPP

namespace resdiff {

inline constexpr const char* kVersion = "resdiff-0.1.0";

} // namespace resdiff

#endif
