#include <iostream>

int main() {
    std::cerr << "thintime: CLI under construction\n";
    return 2;
}
