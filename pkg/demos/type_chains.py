"""
Type chains
===========

A variable's behaviour is the composition of the types attached to it.
Later types in a chain override earlier ones.
"""

from typepgas.typechain import IllegalCoercion, Kind, TypeDescriptor, override_for_expression, parse, resolve

# A block-distributed array with nothing else said: one-sided, read-write.
plain = parse("array[Long,1024]::allocated[partitioned[4]::single[evendist]]")
r = resolve(plain)
print(r.allocation, r.distribution, r.partitions, r.mutability, r.comm_mode)

# Appending async switches remote writes to buffered messages.
buffered = parse("array[Long,1024]::allocated[partitioned[4]::single[evendist]]::async[128]")
r = resolve(buffered)
print(r.comm_mode, r.async_capacity)

# Two async types: the rightmost capacity is the one used.
print(resolve(parse("Long::async[8]::async[512]")).async_capacity)  # 512

# Changing a value's element type is rejected.
try:
    resolve(parse("Int::Char"))
except IllegalCoercion as exc:
    print("rejected:", exc)

# A reduction can be attached to a single expression without touching the
# variable's declared chain.
count = parse("Long")
summed = override_for_expression(count, [TypeDescriptor(Kind.ALLREDUCE, ("sum",))])
print(summed.reduction, resolve(count).reduction)
