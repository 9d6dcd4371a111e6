#pragma once

#include <string>

#include "rfvar/dataset.hpp"
#include "rfvar/forest.hpp"
#include "rfvar/oob.hpp"
#include "rfvar/simulate.hpp"
#include "rfvar/variance.hpp"

namespace rfvar {

// Formats a double with enough decimal digits (up to 17 significant) to
// round-trip bit-exactly through strtod. NaN becomes "nan".
std::string format_double(double v);

// Strict CSV: comma separators, mandatory header, every cell a finite
// number, no quoting, no empty cells. The target column becomes the
// response; remaining columns keep file order. Throws InputError.
Dataset read_csv_dataset(const std::string& path, const std::string& target_column);

// Versioned forest document; parse(serialize(f)) predicts bit-exactly.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);

std::string report_to_json(const VarianceReport& report);

// (i, j, weight) rows ascending, covered rows only.
std::string weights_to_csv(const OOBWeightMatrix& weights);

std::string records_to_csv(const std::vector<RepRecord>& records);
std::string sweep_to_json(const ExperimentResult& result, const ExperimentPlan& plan);
std::string ordering_to_csv(const std::vector<RepRecord>& records);
std::string ordering_to_json(const ExperimentResult& result, const ExperimentPlan& plan);
std::string mconvergence_to_csv(const std::vector<MConvergenceRow>& rows);

// Throws InputError on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace rfvar
