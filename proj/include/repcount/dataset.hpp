#ifndef REPCOUNT_DATASET_HPP
#define REPCOUNT_DATASET_HPP

#include <string>
#include <vector>

#include "repcount/sequence.hpp"

namespace repcount {

// On-disk dataset layout: <dir>/manifest.json holding an array of records
// {id, length, feature_dim, count, cycles:[[start,end],…]} plus one
// little-endian f32 row-major file "<id>.f32" per sequence of size
// length × feature_dim × 4 bytes.
void write_dataset(const std::string& dir, const std::vector<FeatureSequence>& sequences);

// Loads and validates every sequence invariant; throws io_error /
// validation_error with the offending id.
std::vector<FeatureSequence> read_dataset(const std::string& dir);

}  // namespace repcount

#endif
