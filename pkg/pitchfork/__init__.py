"""Detection and classification of pitchfork bifurcations of parametrized vector fields."""
