"""hocpdmp CLI Module"""
