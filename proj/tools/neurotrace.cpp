#include "neurotrace/cli.hpp"

int main(int argc, char** argv) { return neurotrace::run_cli(argc, argv); }
