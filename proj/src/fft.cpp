#include "plc/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <vector>

#include "plc/errors.hpp"

namespace plc::fft {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n, bool forward) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, forward);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    Real* real = fftw_alloc_real(n);
    fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = forward ? fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, flags)
                             : fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, flags);
    fftw_free(real);
    fftw_free(spec);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<std::size_t, bool>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void rfft(std::span<const Real> in, std::span<Complex> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n / 2 + 1) throw ShapeError("rfft: output must hold n/2+1 bins");
  std::vector<Real> buffer(in.begin(), in.end());
  fftw_execute_dft_r2c(cache().get(n, true), buffer.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

void irfft(std::span<const Complex> in, std::span<Real> out) {
  const std::size_t n = out.size();
  if (n == 0 || in.size() != n / 2 + 1) throw ShapeError("irfft: input must hold n/2+1 bins");
  std::vector<Complex> buffer(in.begin(), in.end());  // c2r overwrites its input
  fftw_execute_dft_c2r(cache().get(n, false), reinterpret_cast<fftw_complex*>(buffer.data()), out.data());
}

}  // namespace plc::fft
