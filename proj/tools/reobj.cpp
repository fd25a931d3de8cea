// SPDX-License-Identifier: Apache-2.0
#include "reobj/pipeline.hpp"

int main(int argc, char** argv) { return reobj::cli::run(argc, argv); }
