#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace frec {

// Dense row-major matrix of 64-bit floats. Vectors are n x 1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c, 0.0); }
    static Tensor full(int r, int c, double v) { return Tensor(r, c, v); }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rs) {
        Tensor t(static_cast<int>(rs.size()), rs.size() ? static_cast<int>(rs.begin()->size()) : 0);
        int i = 0;
        for (const auto& row : rs) {
            if (static_cast<int>(row.size()) != t.cols)
                throw std::invalid_argument("Tensor::from_rows: ragged rows");
            int j = 0;
            for (double v : row) t.at(i, j++) = v;
            ++i;
        }
        return t;
    }
    static Tensor column(std::initializer_list<double> vs) {
        Tensor t(static_cast<int>(vs.size()), 1);
        int i = 0;
        for (double v : vs) t.data[i++] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace frec
