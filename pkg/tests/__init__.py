# package tests