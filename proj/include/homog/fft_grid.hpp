#pragma once

#include <homog/common.hpp>

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

namespace homog {

namespace detail {
// FFTW's planner is not thread-safe; plan creation/destruction serializes.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) {}
  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { fftw_free(p); }
  template <class U>
  bool operator==(const FftwAllocator<U>&) const {
    return true;
  }
};
}  // namespace detail

// 16-byte aligned field storage so FFTW plans can be reused across arrays.
using RealField = std::vector<double, detail::FftwAllocator<double>>;
using ComplexField = std::vector<std::complex<double>, detail::FftwAllocator<std::complex<double>>>;

////////////////////////////////////////////////////////////////////////////
/*! Real-to-complex spectral transforms on the periodic voxel grid.
//
//  Wraps FFTW r2c/c2r plans for an N^Dim raster (row-major, last axis
//  fastest and halved to N/2+1 in the spectrum). Precomputes the
//  differentiation symbols kappa_a = 2 pi k_a with the Nyquist frequency
//  zeroed, and the inverse symbol Laplacian used by the reference-medium
//  preconditioner. Plans use FFTW_ESTIMATE so results are bit-identical
//  run to run.
//
//  forward() preserves its input; inverse() destroys its spectral input
//  (FFTW c2r semantics) and scales by 1/nv so forward+inverse round-trips.
*///////////////////////////////////////////////////////////////////////////
template <int Dim>
class SpectralGrid {
 public:
  explicit SpectralGrid(int n) : n_(n) {
    require(is_power_of_two(n), "SpectralGrid: resolution must be a power of two");
    nv_ = 1;
    for (int a = 0; a < Dim; ++a) nv_ *= static_cast<std::size_t>(n_);
    nc_ = nv_ / n_ * (n_ / 2 + 1);

    real_scratch_.assign(nv_, 0.0);
    complex_scratch_.assign(nc_, {0.0, 0.0});

    int dims[Dim];
    for (int a = 0; a < Dim; ++a) dims[a] = n_;
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      plan_r2c_ = fftw_plan_dft_r2c(Dim, dims, real_scratch_.data(),
                                    reinterpret_cast<fftw_complex*>(complex_scratch_.data()),
                                    FFTW_ESTIMATE);
      plan_c2r_ = fftw_plan_dft_c2r(Dim, dims,
                                    reinterpret_cast<fftw_complex*>(complex_scratch_.data()),
                                    real_scratch_.data(), FFTW_ESTIMATE);
    }

    for (int a = 0; a < Dim; ++a) kappa_[a].assign(nc_, 0.0);
    inv_laplace_.assign(nc_, 0.0);
    const int half = n_ / 2;
    for (std::size_t ci = 0; ci < nc_; ++ci) {
      std::size_t rest = ci;
      int k[Dim];
      k[Dim - 1] = static_cast<int>(rest % (half + 1));
      rest /= (half + 1);
      for (int a = Dim - 2; a >= 0; --a) {
        int raw = static_cast<int>(rest % n_);
        rest /= n_;
        k[a] = raw <= half ? raw : raw - n_;
      }
      double sumsq = 0.0;
      for (int a = 0; a < Dim; ++a) {
        // Zero the Nyquist mode: its derivative is not representable by a
        // real trigonometric interpolant.
        const double kap = (k[a] == half || k[a] == -half) ? 0.0 : 2.0 * M_PI * k[a];
        kappa_[a][ci] = kap;
        sumsq += kap * kap;
      }
      inv_laplace_[ci] = sumsq > 0.0 ? 1.0 / sumsq : 0.0;
    }
  }

  ~SpectralGrid() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_r2c_);
    fftw_destroy_plan(plan_c2r_);
  }

  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;

  int resolution() const { return n_; }
  std::size_t num_voxels() const { return nv_; }
  std::size_t num_complex() const { return nc_; }

  void forward(const RealField& in, ComplexField& out) const {
    fftw_execute_dft_r2c(plan_r2c_, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  void inverse(ComplexField& in, RealField& out) const {
    fftw_execute_dft_c2r(plan_c2r_, reinterpret_cast<fftw_complex*>(in.data()),
                         out.data());
    const double scale = 1.0 / static_cast<double>(nv_);
    for (std::size_t v = 0; v < nv_; ++v) out[v] *= scale;
  }

  const std::vector<double>& kappa(int axis) const { return kappa_[axis]; }
  const std::vector<double>& inv_laplace() const { return inv_laplace_; }

 private:
  int n_;
  std::size_t nv_ = 0, nc_ = 0;
  RealField real_scratch_;
  ComplexField complex_scratch_;
  fftw_plan plan_r2c_ = nullptr;
  fftw_plan plan_c2r_ = nullptr;
  std::array<std::vector<double>, Dim> kappa_;
  std::vector<double> inv_laplace_;
};

}  // namespace homog
