#include "cbf/common.hpp"

#include <cmath>

namespace cbf {

namespace {
constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
}

Mat halton_points(int count, const Box& box, std::uint64_t skip) {
    const int n = box.dim();
    if (n > static_cast<int>(sizeof(kPrimes) / sizeof(kPrimes[0]))) {
        throw std::invalid_argument("halton_points: dimension too large");
    }
    Mat pts(count, n);
    for (int k = 0; k < count; ++k) {
        // index 0 of the raw sequence is the origin corner; start at 1.
        const std::uint64_t i = skip + static_cast<std::uint64_t>(k) + 1;
        for (int d = 0; d < n; ++d) {
            const double u = radical_inverse(i, kPrimes[d]);
            pts(k, d) = box.lo[d] + (box.hi[d] - box.lo[d]) * u;
        }
    }
    return pts;
}

bool all_finite(const Vec& v) {
    for (int i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return false;
    }
    return true;
}

bool all_finite(const Mat& m) {
    for (int i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) return false;
    }
    return true;
}

}  // namespace cbf
