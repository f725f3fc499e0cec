#include "nhqm/cli.hpp"

int main(int argc, char** argv) { return nhqm::cli::run_cli(argc, argv); }
