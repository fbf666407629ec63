/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Parameter snapshots.
//
//   magic "LSTRCKP1"
//   u32 metadata length, metadata bytes (UTF-8, free form)
//   u32 block count
//   per block: u32 name length, name bytes, u32 rank, rank x u32 dims,
//              product(dims) x f64 values
// All integers and floats are little-endian.

#include <filesystem>
#include <string>

#include "lstr/numerics.hpp"

namespace lstr {

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     const std::string& metadata = {});

// Loads blocks by name. Every parameter must be present unless `partial` is
// set, in which case parameters absent from the file keep their values.
// Throws FormatError on bad magic, truncation or a shape mismatch. Returns
// the metadata string.
std::string load_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                            bool partial = false);

}  // namespace lstr
