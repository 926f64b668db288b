// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace rd {

const char* version();

}  // namespace rd
