"""From-scratch multilayer perceptron with hand-derived gradients."""
