// SPDX-License-Identifier: Apache-2.0
#include "hguide/pipeline.hpp"

int main(int argc, char** argv) { return hguide::pipeline::run_cli(argc, argv); }
