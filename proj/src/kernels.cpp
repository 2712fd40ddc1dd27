#include "dvgen/kernels.hpp"

namespace dvgen {

double kernel_eval(const ArdKernelParams& p, const Vector& a, const Vector& b) {
    return kernel_eval_generic<double>(p, a, b);
}

Matrix stack_points(const std::vector<Vector>& points) {
    if (points.empty()) return Matrix(0, 0);
    const int d = static_cast<int>(points.front().size());
    Matrix m(static_cast<int>(points.size()), d);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (static_cast<int>(points[i].size()) != d)
            throw DimensionMismatch("stack_points: ragged point list");
        for (int j = 0; j < d; ++j) m(static_cast<int>(i), j) = points[i][static_cast<std::size_t>(j)];
    }
    return m;
}

Matrix kernel_matrix(const ArdKernelParams& p, const std::vector<Vector>& A,
                     const std::vector<Vector>& B) {
    return kernel_matrix_generic<double>(p, stack_points(A), stack_points(B));
}

} // namespace dvgen
