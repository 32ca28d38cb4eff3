// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace covren::detail {

extern const int kEdgeTable[256];
extern const int kTriTable[256][16];

}  // namespace covren::detail
