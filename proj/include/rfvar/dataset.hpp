#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rfvar {

// Training data: an n x p feature matrix (row-major) plus a length-n
// response. Feature values and responses must be finite.
struct Dataset {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> features; // row-major, n_rows * n_cols
    std::vector<double> response;
    std::vector<std::string> column_names;

    double x(std::size_t row, std::size_t col) const {
        return features[row * n_cols + col];
    }
    double y(std::size_t row) const { return response[row]; }

    const double* row(std::size_t r) const { return features.data() + r * n_cols; }

    // Throws InputError on any violated invariant: n >= 2, p >= 1, finite
    // entries, matching lengths, unique column names.
    void validate() const;
};

// Convenience constructor used by tests and the simulator.
Dataset make_dataset(std::size_t n_rows, std::size_t n_cols,
                     std::vector<double> features, std::vector<double> response,
                     std::vector<std::string> column_names = {});

} // namespace rfvar
