#include "rfvar/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "rfvar/errors.hpp"

namespace rfvar {

void Dataset::validate() const {
    if (n_rows < 2) throw InputError("dataset needs at least 2 rows");
    if (n_cols < 1) throw InputError("dataset needs at least 1 feature column");
    if (features.size() != n_rows * n_cols)
        throw InputError("feature matrix size does not match n_rows * n_cols");
    if (response.size() != n_rows)
        throw InputError("response length does not match n_rows");
    if (!column_names.empty() && column_names.size() != n_cols)
        throw InputError("column_names length does not match n_cols");
    for (double v : features)
        if (!std::isfinite(v)) throw InputError("non-finite feature value");
    for (double v : response)
        if (!std::isfinite(v)) throw InputError("non-finite response value");
    std::unordered_set<std::string> seen;
    for (const auto& name : column_names)
        if (!seen.insert(name).second)
            throw InputError("duplicate column name: " + name);
}

Dataset make_dataset(std::size_t n_rows, std::size_t n_cols,
                     std::vector<double> features, std::vector<double> response,
                     std::vector<std::string> column_names) {
    Dataset d;
    d.n_rows = n_rows;
    d.n_cols = n_cols;
    d.features = std::move(features);
    d.response = std::move(response);
    if (column_names.empty()) {
        column_names.reserve(n_cols);
        for (std::size_t j = 0; j < n_cols; ++j)
            column_names.push_back("x" + std::to_string(j + 1));
    }
    d.column_names = std::move(column_names);
    d.validate();
    return d;
}

} // namespace rfvar
