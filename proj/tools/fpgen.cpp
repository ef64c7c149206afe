#include "fpgen/cli.hpp"

int main(int argc, char** argv) { return fpgen::parse_and_dispatch(argc, argv); }
