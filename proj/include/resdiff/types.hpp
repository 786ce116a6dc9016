#ifndef RESDIFF_TYPES_HPP
#define RESDIFF_TYPES_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace resdiff {

// Flush subnormals to zero in this thread. Optimizer moments decay into the
// subnormal range after a few hundred steps, which costs two orders of
// magnitude in throughput on x86 unless flushed. Call once per compute thread.
inline void enable_fast_fp() {
#if defined(__SSE2__)
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

template <class S>
using VecX = Eigen::Vector<S, Eigen::Dynamic>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

using Vec = VecX<double>;
using Mat = MatX<double>;
using VecF = VecX<float>;
using MatF = MatX<float>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

// Error categories map to CLI exit codes: config=2, data=3, numeric=4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace resdiff

#endif
