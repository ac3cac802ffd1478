#pragma once

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace commlearn {

// Dense row-major tensor of doubles, rank 1 or 2 in practice.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(size_t(numel_of(shape)), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (long(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        for (auto& e : t.data) e = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row_vector(std::vector<double> d) {
        int n = int(d.size());
        return Tensor({n}, std::move(d));
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension in " + shape_str(s));
            n *= d;
        }
        return n;
    }

    long numel() const { return long(data.size()); }
    int rank() const { return int(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : int(numel()); }
    int cols() const { return rank() == 2 ? shape[1] : 1; }

    double& operator()(int i) { return data[size_t(i)]; }
    double operator()(int i) const { return data[size_t(i)]; }
    double& operator()(int r, int c) { return data[size_t(r) * shape[1] + c]; }
    double operator()(int r, int c) const { return data[size_t(r) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    std::string shape_str() const { return shape_str(shape); }
};

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

// out = a(m,k) * b(k,n)
inline void matmul_nn(const Tensor& a, const Tensor& b, Tensor& out) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    const double* __restrict pa = a.data.data();
    const double* __restrict pb = b.data.data();
    double* __restrict po = out.data.data();
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* ra = pa + size_t(i) * k;
        double* ro = po + size_t(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ra[p];
            const double* rb = pb + size_t(p) * n;
            for (int j = 0; j < n; ++j) ro[j] += av * rb[j];
        }
    }
}

// out = a(m,k) * b(n,k)^T
inline void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
    const double* __restrict pa = a.data.data();
    const double* __restrict pb = b.data.data();
    double* __restrict po = out.data.data();
    for (int i = 0; i < m; ++i) {
        const double* ra = pa + size_t(i) * k;
        double* ro = po + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* rb = pb + size_t(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ra[p] * rb[p];
            ro[j] = acc;
        }
    }
}

// out += a(k,m)^T * b(k,n)
inline void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    const int k = a.shape[0], m = a.shape[1], n = b.shape[1];
    const double* __restrict pa = a.data.data();
    const double* __restrict pb = b.data.data();
    double* __restrict po = out.data.data();
    for (int p = 0; p < k; ++p) {
        const double* ra = pa + size_t(p) * m;
        const double* rb = pb + size_t(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = ra[i];
            double* ro = po + size_t(i) * n;
            for (int j = 0; j < n; ++j) ro[j] += av * rb[j];
        }
    }
}

} // namespace commlearn
