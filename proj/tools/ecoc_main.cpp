#include "ecoc/cli.hpp"

int main(int argc, char** argv) { return ecoc::run_cli(argc, argv); }
