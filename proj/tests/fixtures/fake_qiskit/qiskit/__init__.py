"""Minimal stand-in exposing the one class the sample task touches."""


class QuantumCircuit:
    def __init__(self, num_qubits=0):
        if not isinstance(num_qubits, int):
            raise TypeError("num_qubits must be an int")
        self.num_qubits = num_qubits
