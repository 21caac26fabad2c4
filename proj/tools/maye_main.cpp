// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "maye/cli.hpp"

int main(int argc, char** argv) {
    return maye::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
