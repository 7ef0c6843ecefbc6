#include "fft.hpp"

#include <mutex>

#include <fftw3.h>

namespace shmfcn::detail {
namespace {

// FFTW planning is not thread-safe; execution with new-array API is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct Plan {
    fftw_plan handle = nullptr;
    ~Plan() {
        if (handle) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(handle);
        }
    }
};

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(n / 2 + 1);
    Plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan.handle = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                           reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan.handle);
    return out;
}

std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) return {};
    const std::size_t len = a.size() + b.size() - 1;
    const std::size_t n = next_pow2(len);
    std::vector<double> pa(n, 0.0), pb(n, 0.0), out(n, 0.0);
    std::copy(a.begin(), a.end(), pa.begin());
    std::copy(b.begin(), b.end(), pb.begin());
    std::vector<std::complex<double>> fa(n / 2 + 1), fb(n / 2 + 1);

    Plan fwd_a, fwd_b, inv;
    {
        std::lock_guard lock(planner_mutex());
        fwd_a.handle = fftw_plan_dft_r2c_1d(static_cast<int>(n), pa.data(), reinterpret_cast<fftw_complex*>(fa.data()),
                                            FFTW_ESTIMATE);
        fwd_b.handle = fftw_plan_dft_r2c_1d(static_cast<int>(n), pb.data(), reinterpret_cast<fftw_complex*>(fb.data()),
                                            FFTW_ESTIMATE);
        inv.handle = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(fa.data()), out.data(),
                                          FFTW_ESTIMATE);
    }
    fftw_execute(fwd_a.handle);
    fftw_execute(fwd_b.handle);
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
    fftw_execute(inv.handle);  // destroys fa, unnormalized

    out.resize(len);
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : out) v *= scale;
    return out;
}

}  // namespace shmfcn::detail
