# marks tests as a package so the acceptance gate can import the naive
# convolution reference from its sibling module under any pytest invocation
