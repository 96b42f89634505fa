#include "anchorprop/cli.hpp"

int main(int argc, char** argv) { return anchorprop::cli_dispatch(argc, argv); }
