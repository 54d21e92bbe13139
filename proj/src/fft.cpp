#include "moire/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace moire::fft {

namespace {

// fftw's planner is not re-entrant
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using fftw_buf = std::unique_ptr<T, FftwFree>;

class Plan {
 public:
  explicit Plan(fftw_plan p) : p_(p) {
    if (!p_) throw std::runtime_error("fftw plan creation failed");
  }
  ~Plan() {
    std::lock_guard<std::mutex> lk(planner_mutex());
    fftw_destroy_plan(p_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void run() const { fftw_execute(p_); }

 private:
  fftw_plan p_;
};

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

cvec transform(const cvec& in, bool inverse) {
  const std::size_t n = in.size();
  if (n == 0) return {};
  fftw_buf<fftw_complex> buf(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
  fftw_plan raw;
  {
    std::lock_guard<std::mutex> lk(planner_mutex());
    raw = fftw_plan_dft_1d(static_cast<int>(n), buf.get(), buf.get(),
                           inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  }
  Plan plan(raw);
  std::memcpy(buf.get(), in.data(), sizeof(fftw_complex) * n);
  plan.run();
  cvec out(n);
  std::memcpy(static_cast<void*>(out.data()), buf.get(), sizeof(fftw_complex) * n);
  return out;
}

cvec real_forward(const std::vector<double>& in, std::size_t n_fft) {
  n_fft = std::max(n_fft, in.size());
  if (n_fft == 0) return {};
  const std::size_t nout = n_fft / 2 + 1;
  fftw_buf<double> rin(static_cast<double*>(fftw_malloc(sizeof(double) * n_fft)));
  fftw_buf<fftw_complex> cout(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nout)));
  fftw_plan raw;
  {
    std::lock_guard<std::mutex> lk(planner_mutex());
    raw = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), rin.get(), cout.get(), FFTW_ESTIMATE);
  }
  Plan plan(raw);
  std::fill(rin.get(), rin.get() + n_fft, 0.0);
  std::copy(in.begin(), in.end(), rin.get());
  plan.run();
  cvec out(nout);
  std::memcpy(static_cast<void*>(out.data()), cout.get(), sizeof(fftw_complex) * nout);
  return out;
}

}  // namespace moire::fft
