#include "tsqa/cli_commands.hpp"

int main(int argc, char** argv) { return tsqa::cli::run_cli(argc, argv); }
